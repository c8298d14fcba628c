#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gridpv/common.hpp"
#include "gridpv/onnx.hpp"
#include "oracles.hpp"

using namespace gridpv;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("gridpv_onnx_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("identity graphs pass tensors through") {
    auto bytes = oracles::onnx_model("x", {1, 3}, "y", {{"Identity", {"x"}, {"y"}, {}, {}}}, {});
    onnx::Model model = onnx::Model::parse(bytes);
    CHECK(model.input_name() == "x");
    CHECK(model.output_name() == "y");
    CHECK(model.input_dims() == std::vector<std::int64_t>{1, 3});

    onnx::Tensor in;
    in.dims = {1, 3};
    in.values = {1.5f, -2.0f, 0.25f};
    onnx::Tensor out = model.run(in);
    CHECK(out.values == in.values);
}

TEST_CASE("a small mlp computes gemm, bias, relu and sigmoid") {
    // y = sigmoid(relu(x * W1 + b1) * W2^T)  with x in R^{1x2}
    std::vector<oracles::ProtoWriter> inits;
    inits.push_back(oracles::onnx_tensor("W1", {2, 3}, {0.5f, -1.0f, 2.0f, 1.0f, 0.0f, -0.5f}));
    inits.push_back(oracles::onnx_tensor("b1", {3}, {0.1f, 0.2f, -0.3f}));
    inits.push_back(oracles::onnx_tensor("W2", {2, 3}, {1.0f, -1.0f, 0.5f, 0.0f, 2.0f, 1.0f}));

    std::vector<oracles::OnnxNodeSpec> nodes;
    nodes.push_back({"Gemm", {"x", "W1", "b1"}, {"h"}, {}, {}});
    nodes.push_back({"Relu", {"h"}, {"a"}, {}, {}});
    nodes.push_back({"Gemm", {"a", "W2"}, {"z"}, {}, {{"transB", 1}}});
    nodes.push_back({"Sigmoid", {"z"}, {"y"}, {}, {}});

    onnx::Model model = onnx::Model::parse(oracles::onnx_model("x", {1, 2}, "y", nodes, inits));

    onnx::Tensor in;
    in.dims = {1, 2};
    in.values = {2.0f, -1.0f};
    onnx::Tensor out = model.run(in);
    REQUIRE(out.values.size() == 2);

    // hand evaluation: h = x W1 + b1 = (0.1, -1.8, 4.2), relu -> (0.1, 0, 4.2)
    // z = a W2^T = (0.1*1 + 0*-1 + 4.2*0.5, 0.1*0 + 0*2 + 4.2*1) = (2.2, 4.2)
    CHECK(out.values[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.2))).epsilon(1e-6));
    CHECK(out.values[1] == doctest::Approx(1.0 / (1.0 + std::exp(-4.2))).epsilon(1e-6));
}

TEST_CASE("gemm respects alpha, beta and transA") {
    std::vector<oracles::ProtoWriter> inits;
    inits.push_back(oracles::onnx_tensor("W", {2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));
    inits.push_back(oracles::onnx_tensor("b", {2}, {10.0f, 20.0f}));
    oracles::OnnxNodeSpec node{"Gemm", {"x", "W", "b"}, {"y"}, {{"alpha", 2.0f}, {"beta", 0.5f}},
                               {{"transA", 1}}};
    onnx::Model model = onnx::Model::parse(oracles::onnx_model("x", {2, 1}, "y", {node}, inits));

    onnx::Tensor in;
    in.dims = {2, 1};
    in.values = {1.0f, 2.0f};  // x^T = [1, 2]
    onnx::Tensor out = model.run(in);
    // y = 2 * [1 2] W + 0.5 b = 2*[7, 10] + [5, 10] = [19, 30]
    REQUIRE(out.values.size() == 2);
    CHECK(out.values[0] == doctest::Approx(19.0));
    CHECK(out.values[1] == doctest::Approx(30.0));
}

TEST_CASE("elementwise chains broadcast scalars and per-column vectors") {
    std::vector<oracles::ProtoWriter> inits;
    inits.push_back(oracles::onnx_tensor("s", {1}, {3.0f}));
    inits.push_back(oracles::onnx_tensor("v", {2}, {1.0f, -1.0f}));
    std::vector<oracles::OnnxNodeSpec> nodes;
    nodes.push_back({"Mul", {"x", "s"}, {"m"}, {}, {}});
    nodes.push_back({"Add", {"m", "v"}, {"a"}, {}, {}});
    nodes.push_back({"Sub", {"a", "x"}, {"d"}, {}, {}});
    nodes.push_back({"Tanh", {"d"}, {"y"}, {}, {}});
    onnx::Model model = onnx::Model::parse(oracles::onnx_model("x", {1, 2}, "y", nodes, inits));

    onnx::Tensor in;
    in.dims = {1, 2};
    in.values = {0.5f, 0.25f};
    onnx::Tensor out = model.run(in);
    // d = (3x + v) - x = 2x + v = (2.0, -0.5)
    CHECK(out.values[0] == doctest::Approx(std::tanh(2.0)).epsilon(1e-6));
    CHECK(out.values[1] == doctest::Approx(std::tanh(-0.5)).epsilon(1e-6));
}

TEST_CASE("flatten and reshape rearrange dims without touching data") {
    // 1x2x2x2 -> Flatten -> 1x8 -> Reshape to 2x4 via an int64 initializer
    std::vector<oracles::ProtoWriter> inits;
    oracles::ProtoWriter target;
    target.packed_varints_field(1, {2});
    target.varint_field(2, 7);
    target.packed_varints_field(7, {2, 4});
    target.string_field(8, "target");
    inits.push_back(target);

    std::vector<oracles::OnnxNodeSpec> nodes;
    nodes.push_back({"Flatten", {"x"}, {"f"}, {}, {{"axis", 1}}});
    nodes.push_back({"Reshape", {"f", "target"}, {"y"}, {}, {}});
    onnx::Model model =
        onnx::Model::parse(oracles::onnx_model("x", {1, 2, 2, 2}, "y", nodes, inits));

    onnx::Tensor in;
    in.dims = {1, 2, 2, 2};
    in.values = {1, 2, 3, 4, 5, 6, 7, 8};
    onnx::Tensor out = model.run(in);
    CHECK(out.dims == std::vector<std::int64_t>{2, 4});
    CHECK(out.values == in.values);
}

TEST_CASE("global average pooling reduces spatial dims") {
    onnx::Model model = onnx::Model::parse(oracles::onnx_model(
        "x", {1, 2, 2, 2}, "y", {{"GlobalAveragePool", {"x"}, {"y"}, {}, {}}}, {}));
    onnx::Tensor in;
    in.dims = {1, 2, 2, 2};
    in.values = {1, 2, 3, 4, 10, 20, 30, 40};
    onnx::Tensor out = model.run(in);
    CHECK(out.dims == std::vector<std::int64_t>{1, 2, 1, 1});
    REQUIRE(out.values.size() == 2);
    CHECK(out.values[0] == doctest::Approx(2.5));
    CHECK(out.values[1] == doctest::Approx(25.0));
}

TEST_CASE("model files load from disk and report the operator subset") {
    TempDir dir;
    std::string path = dir.file("id.onnx");
    write_bytes(path,
                oracles::onnx_model("x", {1, 2}, "y", {{"Identity", {"x"}, {"y"}, {}, {}}}, {}));
    onnx::Model model = onnx::Model::load(path);
    onnx::Tensor in;
    in.dims = {1, 2};
    in.values = {5.0f, 6.0f};
    CHECK(model.run(in).values == in.values);

    CHECK_THROWS_WITH_AS(onnx::Model::load(dir.file("missing.onnx")),
                         doctest::Contains("cannot open"), Error);
}

TEST_CASE("malformed or unsupported models fail with clear errors") {
    CHECK_THROWS_WITH_AS(onnx::Model::parse({}), doctest::Contains("no graph"), Error);

    // two free graph inputs violate the single-input contract
    {
        oracles::ProtoWriter graph;
        graph.message_field(1, oracles::onnx_node({"Add", {"x", "x2"}, {"y"}, {}, {}}));
        graph.message_field(11, oracles::onnx_value_info("x", {1, 2}));
        graph.message_field(11, oracles::onnx_value_info("x2", {1, 2}));
        graph.message_field(12, oracles::onnx_value_info("y", {}));
        oracles::ProtoWriter model;
        model.message_field(7, graph);
        CHECK_THROWS_WITH_AS(onnx::Model::parse(model.bytes()),
                             doctest::Contains("single input"), Error);
    }

    // unsupported op surfaces at run time with its name
    onnx::Model model = onnx::Model::parse(
        oracles::onnx_model("x", {1, 2}, "y", {{"Softmax", {"x"}, {"y"}, {}, {}}}, {}));
    onnx::Tensor in;
    in.dims = {1, 2};
    in.values = {1.0f, 2.0f};
    CHECK_THROWS_WITH_AS(model.run(in), doctest::Contains("Softmax"), Error);
}

TEST_CASE("external extraction feeds flattened images through the model") {
    TempDir dir;
    // W sums each channel: input length 48 = 3 channels * 4x4, output 3
    std::vector<float> weights(48 * 3, 0.0f);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) weights[std::size_t(c * 16 + i) * 3 + c] = 1.0f;
    std::vector<oracles::ProtoWriter> inits;
    inits.push_back(oracles::onnx_tensor("W", {48, 3}, weights));
    std::string path = dir.file("sum.onnx");
    write_bytes(path, oracles::onnx_model("x", {1, 48}, "y",
                                          {{"MatMul", {"x", "W"}, {"y"}, {}, {}}}, inits));

    ExtractorSpec spec;
    spec.kind = ExtractorKind::ExternalModel;
    spec.model_path = path;
    // input_size inferred from the flat dim: sqrt(48 / 3) = 4

    ImageU8 img(4, 4, 3);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            img.at(x, y, 0) = 51;   // 0.2 after scaling
            img.at(x, y, 1) = 102;  // 0.4
            img.at(x, y, 2) = 255;  // 1.0
        }
    std::vector<FeatureVector> out = extract_external({img, img}, spec);
    REQUIRE(out.size() == 2);
    REQUIRE(out[0].size() == 3);
    CHECK(out[0][0] == doctest::Approx(16 * 0.2).epsilon(1e-5));
    CHECK(out[0][1] == doctest::Approx(16 * 0.4).epsilon(1e-5));
    CHECK(out[0][2] == doctest::Approx(16 * 1.0).epsilon(1e-5));
    CHECK(out[1] == out[0]);
}

TEST_CASE("spatial model outputs are pooled per channel") {
    TempDir dir;
    // reshape the flattened input back to 1x3x4x4 and return it; extraction
    // should then pool each channel to its mean
    oracles::ProtoWriter target;
    target.packed_varints_field(1, {4});
    target.varint_field(2, 7);
    target.packed_varints_field(7, {1, 3, 4, 4});
    target.string_field(8, "t");

    std::string path = dir.file("map.onnx");
    write_bytes(path, oracles::onnx_model("x", {1, 48}, "y",
                                          {{"Reshape", {"x", "t"}, {"y"}, {}, {}}}, {target}));

    ExtractorSpec spec;
    spec.kind = ExtractorKind::ExternalModel;
    spec.model_path = path;

    ImageU8 img(4, 4, 3);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::uint8_t(10 * (c + 1));
    std::vector<FeatureVector> out = extract_external({img}, spec);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].size() == 3);
    for (int c = 0; c < 3; ++c)
        CHECK(out[0][c] == doctest::Approx(10.0 * (c + 1) / 255.0).epsilon(1e-5));
}

TEST_CASE("rank-4 models declare their own spatial size") {
    TempDir dir;
    std::string path = dir.file("nchw.onnx");
    write_bytes(path, oracles::onnx_model("x", {1, 3, 2, 2}, "y",
                                          {{"GlobalAveragePool", {"x"}, {"y"}, {}, {}}}, {}));
    ExtractorSpec spec;
    spec.kind = ExtractorKind::ExternalModel;
    spec.model_path = path;

    ImageU8 img(8, 8, 3);
    for (auto& p : img.pixels) p = 102;
    std::vector<FeatureVector> out = extract_external({img}, spec);
    REQUIRE(out[0].size() == 3);
    for (int c = 0; c < 3; ++c) CHECK(out[0][c] == doctest::Approx(0.4).epsilon(1e-5));

    spec.kind = ExtractorKind::Baseline;
    CHECK_THROWS_AS(extract_external({img}, spec), Error);
}
