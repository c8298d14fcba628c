#include "gridpv/onnx.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gridpv/common.hpp"

namespace gridpv {
namespace onnx {

namespace {

// ---------------------------------------------------------------------------
// Protobuf wire-format reader, limited to the fields the loader consumes.
// ---------------------------------------------------------------------------

class ProtoReader {
public:
    ProtoReader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

    bool done() const { return p_ >= end_; }

    std::uint64_t read_varint() {
        std::uint64_t value = 0;
        int shift = 0;
        while (p_ < end_) {
            const std::uint8_t byte = *p_++;
            value |= std::uint64_t(byte & 0x7f) << shift;
            if (!(byte & 0x80)) return value;
            shift += 7;
            if (shift >= 64) break;
        }
        throw Error("onnx.parse", "malformed varint");
    }

    /// Returns (field_number, wire_type).
    std::pair<std::uint32_t, std::uint32_t> read_tag() {
        const std::uint64_t key = read_varint();
        return {std::uint32_t(key >> 3), std::uint32_t(key & 7)};
    }

    ProtoReader read_message() {
        const std::uint64_t len = read_varint();
        require(len);
        ProtoReader sub(p_, std::size_t(len));
        p_ += len;
        return sub;
    }

    std::string read_string() {
        const std::uint64_t len = read_varint();
        require(len);
        std::string s(reinterpret_cast<const char*>(p_), std::size_t(len));
        p_ += len;
        return s;
    }

    float read_fixed32() {
        require(4);
        float f;
        std::memcpy(&f, p_, 4);
        p_ += 4;
        return f;
    }

    double read_fixed64() {
        require(8);
        double d;
        std::memcpy(&d, p_, 8);
        p_ += 8;
        return d;
    }

    void skip(std::uint32_t wire_type) {
        switch (wire_type) {
            case 0: read_varint(); break;
            case 1: require(8); p_ += 8; break;
            case 2: { const auto len = read_varint(); require(len); p_ += len; break; }
            case 5: require(4); p_ += 4; break;
            default: throw Error("onnx.parse", "unsupported wire type " + std::to_string(wire_type));
        }
    }

private:
    void require(std::uint64_t n) {
        if (std::uint64_t(end_ - p_) < n) throw Error("onnx.parse", "truncated message");
    }

    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

std::vector<std::int64_t> read_packed_int64(ProtoReader sub) {
    std::vector<std::int64_t> out;
    while (!sub.done()) out.push_back(std::int64_t(sub.read_varint()));
    return out;
}

Tensor parse_tensor(ProtoReader r, std::string* name_out) {
    Tensor t;
    int data_type = 1;  // FLOAT
    std::string raw;
    std::vector<std::int64_t> int64_data;
    while (!r.done()) {
        auto [field, wire] = r.read_tag();
        switch (field) {
            case 1:  // dims
                if (wire == 2) {
                    auto v = read_packed_int64(r.read_message());
                    t.dims.insert(t.dims.end(), v.begin(), v.end());
                } else {
                    t.dims.push_back(std::int64_t(r.read_varint()));
                }
                break;
            case 2: data_type = int(r.read_varint()); break;
            case 4:  // float_data
                if (wire == 2) {
                    ProtoReader sub = r.read_message();
                    while (!sub.done()) t.values.push_back(sub.read_fixed32());
                } else {
                    t.values.push_back(r.read_fixed32());
                }
                break;
            case 7:  // int64_data
                if (wire == 2) {
                    auto v = read_packed_int64(r.read_message());
                    int64_data.insert(int64_data.end(), v.begin(), v.end());
                } else {
                    int64_data.push_back(std::int64_t(r.read_varint()));
                }
                break;
            case 8: *name_out = r.read_string(); break;
            case 9: raw = r.read_string(); break;
            default: r.skip(wire); break;
        }
    }

    if (!raw.empty()) {
        if (data_type == 1) {  // FLOAT
            t.values.resize(raw.size() / 4);
            std::memcpy(t.values.data(), raw.data(), t.values.size() * 4);
        } else if (data_type == 7) {  // INT64
            int64_data.resize(raw.size() / 8);
            std::memcpy(int64_data.data(), raw.data(), int64_data.size() * 8);
        } else {
            throw Error("onnx.parse", "unsupported tensor data type " + std::to_string(data_type));
        }
    }
    if (data_type == 7) {
        // Shape-style tensors are carried as floats internally; values are
        // small integers (Reshape targets), exact in float64/float32 range.
        for (auto v : int64_data) t.values.push_back(float(v));
    } else if (data_type != 1) {
        throw Error("onnx.parse", "unsupported tensor data type " + std::to_string(data_type));
    }
    return t;
}

std::vector<std::int64_t> parse_value_info_dims(ProtoReader r, std::string* name_out) {
    std::vector<std::int64_t> dims;
    while (!r.done()) {
        auto [field, wire] = r.read_tag();
        if (field == 1) {
            *name_out = r.read_string();
        } else if (field == 2 && wire == 2) {
            ProtoReader type = r.read_message();
            while (!type.done()) {
                auto [tf, tw] = type.read_tag();
                if (tf == 1 && tw == 2) {  // tensor_type
                    ProtoReader tt = type.read_message();
                    while (!tt.done()) {
                        auto [sf, sw] = tt.read_tag();
                        if (sf == 2 && sw == 2) {  // shape
                            ProtoReader shape = tt.read_message();
                            while (!shape.done()) {
                                auto [df, dw] = shape.read_tag();
                                if (df == 1 && dw == 2) {
                                    ProtoReader dim = shape.read_message();
                                    std::int64_t value = -1;
                                    while (!dim.done()) {
                                        auto [ff, fw] = dim.read_tag();
                                        if (ff == 1)
                                            value = std::int64_t(dim.read_varint());
                                        else
                                            dim.skip(fw);
                                    }
                                    dims.push_back(value);
                                } else {
                                    shape.skip(dw);
                                }
                            }
                        } else {
                            tt.skip(sw);
                        }
                    }
                } else {
                    type.skip(tw);
                }
            }
        } else {
            r.skip(wire);
        }
    }
    return dims;
}

}  // namespace

Model Model::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("onnx.load", "cannot open model file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse(bytes);
}

Model Model::parse(const std::vector<std::uint8_t>& bytes) {
    Model model;
    ProtoReader root(bytes.data(), bytes.size());

    bool have_graph = false;
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> graph_inputs;
    std::vector<std::string> graph_outputs;

    while (!root.done()) {
        auto [field, wire] = root.read_tag();
        if (field == 7 && wire == 2) {  // graph
            have_graph = true;
            ProtoReader graph = root.read_message();
            while (!graph.done()) {
                auto [gf, gw] = graph.read_tag();
                switch (gf) {
                    case 1: {  // node
                        ProtoReader nr = graph.read_message();
                        Node node;
                        while (!nr.done()) {
                            auto [nf, nw] = nr.read_tag();
                            switch (nf) {
                                case 1: node.inputs.push_back(nr.read_string()); break;
                                case 2: node.outputs.push_back(nr.read_string()); break;
                                case 4: node.op = nr.read_string(); break;
                                case 5: {  // attribute
                                    ProtoReader ar = nr.read_message();
                                    std::string name;
                                    double fval = 0;
                                    std::int64_t ival = 0;
                                    std::vector<std::int64_t> ints;
                                    bool has_f = false, has_i = false;
                                    while (!ar.done()) {
                                        auto [af, aw] = ar.read_tag();
                                        switch (af) {
                                            case 1: name = ar.read_string(); break;
                                            case 2: fval = ar.read_fixed32(); has_f = true; break;
                                            case 3: ival = std::int64_t(ar.read_varint()); has_i = true; break;
                                            case 8:
                                                if (aw == 2) {
                                                    auto v = read_packed_int64(ar.read_message());
                                                    ints.insert(ints.end(), v.begin(), v.end());
                                                } else {
                                                    ints.push_back(std::int64_t(ar.read_varint()));
                                                }
                                                break;
                                            default: ar.skip(aw); break;
                                        }
                                    }
                                    if (has_i) node.int_attrs[name] = ival;
                                    if (has_f) node.float_attrs[name] = fval;
                                    if (!ints.empty()) node.ints_attrs[name] = std::move(ints);
                                    break;
                                }
                                default: nr.skip(nw); break;
                            }
                        }
                        model.nodes_.push_back(std::move(node));
                        break;
                    }
                    case 5: {  // initializer
                        std::string name;
                        Tensor t = parse_tensor(graph.read_message(), &name);
                        model.initializers_[name] = std::move(t);
                        break;
                    }
                    case 11: {  // input
                        std::string name;
                        auto dims = parse_value_info_dims(graph.read_message(), &name);
                        graph_inputs.emplace_back(name, std::move(dims));
                        break;
                    }
                    case 12: {  // output
                        std::string name;
                        parse_value_info_dims(graph.read_message(), &name);
                        graph_outputs.push_back(name);
                        break;
                    }
                    default: graph.skip(gw); break;
                }
            }
        } else {
            root.skip(wire);
        }
    }

    if (!have_graph) throw Error("onnx.load", "model has no graph");
    // Old IR versions list initializers among graph inputs; ignore those.
    for (auto& [name, dims] : graph_inputs) {
        if (model.initializers_.count(name)) continue;
        if (!model.input_name_.empty())
            throw Error("onnx.load", "model must have a single input");
        model.input_name_ = name;
        model.input_dims_ = dims;
    }
    if (model.input_name_.empty()) throw Error("onnx.load", "model has no input");
    if (graph_outputs.size() != 1) throw Error("onnx.load", "model must have a single output");
    model.output_name_ = graph_outputs[0];
    return model;
}

namespace {

void check_same_size(const Tensor& a, const Tensor& b, const char* op) {
    if (a.size() != b.size() && b.size() != 1 &&
        !(a.dims.size() >= 1 && b.size() == std::size_t(a.dims.back())))
        throw Error("onnx.run", std::string(op) + ": unsupported broadcast");
}

Tensor elementwise(const Tensor& a, const Tensor& b, const char* op,
                   float (*f)(float, float)) {
    check_same_size(a, b, op);
    Tensor out;
    out.dims = a.dims;
    out.values.resize(a.size());
    if (b.size() == a.size()) {
        for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = f(a.values[i], b.values[i]);
    } else if (b.size() == 1) {
        for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = f(a.values[i], b.values[0]);
    } else {  // per-last-dim broadcast
        const std::size_t last = b.size();
        for (std::size_t i = 0; i < a.size(); ++i)
            out.values[i] = f(a.values[i], b.values[i % last]);
    }
    return out;
}

}  // namespace

Tensor Model::run(const Tensor& input) const {
    std::map<std::string, Tensor> env = initializers_;
    env[input_name_] = input;

    auto get = [&](const std::string& name) -> const Tensor& {
        auto it = env.find(name);
        if (it == env.end()) throw Error("onnx.run", "missing tensor '" + name + "'");
        return it->second;
    };

    for (const auto& node : nodes_) {
        Tensor out;
        if (node.op == "Identity") {
            out = get(node.inputs.at(0));
        } else if (node.op == "Relu") {
            out = get(node.inputs.at(0));
            for (auto& v : out.values) v = std::max(0.0f, v);
        } else if (node.op == "Sigmoid") {
            out = get(node.inputs.at(0));
            for (auto& v : out.values) v = 1.0f / (1.0f + std::exp(-v));
        } else if (node.op == "Tanh") {
            out = get(node.inputs.at(0));
            for (auto& v : out.values) v = std::tanh(v);
        } else if (node.op == "Add") {
            out = elementwise(get(node.inputs.at(0)), get(node.inputs.at(1)), "Add",
                              [](float a, float b) { return a + b; });
        } else if (node.op == "Sub") {
            out = elementwise(get(node.inputs.at(0)), get(node.inputs.at(1)), "Sub",
                              [](float a, float b) { return a - b; });
        } else if (node.op == "Mul") {
            out = elementwise(get(node.inputs.at(0)), get(node.inputs.at(1)), "Mul",
                              [](float a, float b) { return a * b; });
        } else if (node.op == "MatMul" || node.op == "Gemm") {
            const Tensor& a = get(node.inputs.at(0));
            Tensor b = get(node.inputs.at(1));
            if (a.dims.size() != 2 || b.dims.size() != 2)
                throw Error("onnx.run", node.op + ": only 2-D operands supported");
            bool trans_a = false, trans_b = false;
            double alpha = 1.0, beta = 1.0;
            if (node.op == "Gemm") {
                auto geti = [&](const char* k, std::int64_t d) {
                    auto it = node.int_attrs.find(k);
                    return it == node.int_attrs.end() ? d : it->second;
                };
                auto getf = [&](const char* k, double d) {
                    auto it = node.float_attrs.find(k);
                    return it == node.float_attrs.end() ? d : it->second;
                };
                trans_a = geti("transA", 0) != 0;
                trans_b = geti("transB", 0) != 0;
                alpha = getf("alpha", 1.0);
                beta = getf("beta", 1.0);
            }
            const std::int64_t m = trans_a ? a.dims[1] : a.dims[0];
            const std::int64_t k = trans_a ? a.dims[0] : a.dims[1];
            const std::int64_t kb = trans_b ? b.dims[1] : b.dims[0];
            const std::int64_t n = trans_b ? b.dims[0] : b.dims[1];
            if (k != kb) throw Error("onnx.run", node.op + ": inner dimension mismatch");
            out.dims = {m, n};
            out.values.assign(std::size_t(m * n), 0.0f);
            for (std::int64_t i = 0; i < m; ++i) {
                for (std::int64_t j = 0; j < n; ++j) {
                    double acc = 0;
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const float av = trans_a ? a.values[kk * m + i] : a.values[i * k + kk];
                        const float bv = trans_b ? b.values[j * k + kk] : b.values[kk * n + j];
                        acc += double(av) * double(bv);
                    }
                    out.values[std::size_t(i * n + j)] = float(alpha * acc);
                }
            }
            if (node.op == "Gemm" && node.inputs.size() > 2 && !node.inputs[2].empty()) {
                const Tensor& c = get(node.inputs[2]);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < n; ++j)
                        out.values[std::size_t(i * n + j)] +=
                            float(beta) * c.values[c.size() == std::size_t(n) ? std::size_t(j)
                                                                              : std::size_t(i * n + j) % c.size()];
            }
        } else if (node.op == "Flatten") {
            const Tensor& a = get(node.inputs.at(0));
            std::int64_t axis = 1;
            if (auto it = node.int_attrs.find("axis"); it != node.int_attrs.end())
                axis = it->second;
            if (axis < 0) axis += std::int64_t(a.dims.size());
            std::int64_t outer = 1, inner = 1;
            for (std::size_t i = 0; i < a.dims.size(); ++i)
                (std::int64_t(i) < axis ? outer : inner) *= a.dims[i];
            out = a;
            out.dims = {outer, inner};
        } else if (node.op == "Reshape") {
            const Tensor& a = get(node.inputs.at(0));
            const Tensor& shape = get(node.inputs.at(1));
            std::vector<std::int64_t> dims;
            std::int64_t known = 1;
            int wildcard = -1;
            for (std::size_t i = 0; i < shape.values.size(); ++i) {
                std::int64_t d = std::int64_t(shape.values[i]);
                if (d == 0) d = a.dims.at(i);
                if (d == -1) {
                    wildcard = int(i);
                    dims.push_back(-1);
                } else {
                    dims.push_back(d);
                    known *= d;
                }
            }
            if (wildcard >= 0) dims[wildcard] = std::int64_t(a.size()) / known;
            out = a;
            out.dims = dims;
            if (out.size() != a.size()) throw Error("onnx.run", "Reshape: element count mismatch");
        } else if (node.op == "GlobalAveragePool") {
            const Tensor& a = get(node.inputs.at(0));
            if (a.dims.size() < 3)
                throw Error("onnx.run", "GlobalAveragePool: input must have spatial dims");
            const std::int64_t nbatch = a.dims[0], nchan = a.dims[1];
            std::int64_t spatial = 1;
            for (std::size_t i = 2; i < a.dims.size(); ++i) spatial *= a.dims[i];
            out.dims = {nbatch, nchan};
            for (std::size_t i = 2; i < a.dims.size(); ++i) out.dims.push_back(1);
            out.values.resize(std::size_t(nbatch * nchan));
            for (std::int64_t b = 0; b < nbatch; ++b) {
                for (std::int64_t c = 0; c < nchan; ++c) {
                    double acc = 0;
                    const float* base = a.values.data() + (b * nchan + c) * spatial;
                    for (std::int64_t s = 0; s < spatial; ++s) acc += base[s];
                    out.values[std::size_t(b * nchan + c)] = float(acc / double(spatial));
                }
            }
        } else {
            throw Error("onnx.run", "unsupported operator '" + node.op + "'");
        }
        env[node.outputs.at(0)] = std::move(out);
    }
    return get(output_name_);
}

}  // namespace onnx

std::vector<FeatureVector> extract_external(const std::vector<ImageU8>& images,
                                            const ExtractorSpec& spec) {
    if (spec.kind != ExtractorKind::ExternalModel)
        throw Error("features.extract_external", "spec.kind must be ExternalModel");
    onnx::Model model = onnx::Model::load(spec.model_path);

    const auto& dims = model.input_dims();
    int side = spec.input_size;
    bool nchw;
    std::int64_t flat_dim = 0;
    if (dims.size() == 4) {
        nchw = true;
        if (dims[1] != 3)
            throw Error("features.extract_external", "model input must have 3 channels");
        if (side <= 0) {
            if (dims[2] <= 0 || dims[3] <= 0)
                throw Error("features.extract_external",
                            "input_size required for models with dynamic spatial dims");
            if (dims[2] != dims[3])
                throw Error("features.extract_external", "non-square model input needs input_size");
            side = int(dims[2]);
        }
    } else if (dims.size() == 2) {
        nchw = false;
        flat_dim = dims[1];
        if (side <= 0) {
            const double s = std::sqrt(double(flat_dim) / 3.0);
            side = int(std::lround(s));
            if (std::int64_t(side) * side * 3 != flat_dim)
                throw Error("features.extract_external",
                            "cannot infer input_size from flattened input length " +
                                std::to_string(flat_dim));
        }
    } else {
        throw Error("features.extract_external", "model input must be rank 2 or 4");
    }

    std::vector<FeatureVector> out;
    std::size_t established_dim = 0;
    for (const auto& src : images) {
        ImageU8 img = resize_bilinear(src, side, side);
        onnx::Tensor input;
        if (nchw) {
            input.dims = {1, 3, side, side};
            input.values.resize(std::size_t(3) * side * side);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < side; ++y)
                    for (int x = 0; x < side; ++x)
                        input.values[(std::size_t(c) * side + y) * side + x] = float(
                            img.at(x, y, c) * spec.norm_scale[c] + spec.norm_offset[c]);
        } else {
            input.dims = {1, flat_dim};
            input.values.resize(std::size_t(flat_dim));
            // Same NCHW traversal, flattened.
            std::size_t i = 0;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < side; ++y)
                    for (int x = 0; x < side; ++x)
                        input.values[i++] = float(img.at(x, y, c) * spec.norm_scale[c] +
                                                  spec.norm_offset[c]);
        }

        onnx::Tensor result = model.run(input);
        if (result.dims.size() > 2) {
            // Spatial map: pool over everything past the channel dim.
            const std::int64_t nchan = result.dims[1];
            std::int64_t spatial = 1;
            for (std::size_t i = 2; i < result.dims.size(); ++i) spatial *= result.dims[i];
            FeatureVector v(static_cast<std::size_t>(nchan));
            for (std::int64_t c = 0; c < nchan; ++c) {
                double acc = 0;
                for (std::int64_t s = 0; s < spatial; ++s)
                    acc += result.values[std::size_t(c * spatial + s)];
                v[std::size_t(c)] = float(acc / double(spatial));
            }
            out.push_back(std::move(v));
        } else {
            out.push_back(FeatureVector(result.values.begin(), result.values.end()));
        }

        if (established_dim == 0) established_dim = out.back().size();
        if (out.back().size() != established_dim)
            throw Error("features.extract_external",
                        "model output dimension changed mid-run: " +
                            std::to_string(out.back().size()) + " vs " +
                            std::to_string(established_dim));
    }
    return out;
}

}  // namespace gridpv
