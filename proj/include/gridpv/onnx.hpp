#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gridpv/features.hpp"
#include "gridpv/image.hpp"

namespace gridpv {
namespace onnx {

/// Dense float tensor; dims follow the model's declared layout.
struct Tensor {
    std::vector<std::int64_t> dims;
    std::vector<float> values;

    std::size_t size() const {
        std::size_t n = 1;
        for (auto d : dims) n *= std::size_t(d);
        return n;
    }
};

/// A single-input single-output ONNX graph evaluated with a small operator
/// subset: Identity, Relu, Sigmoid, Tanh, Add, Sub, Mul, MatMul, Gemm,
/// Flatten, Reshape, GlobalAveragePool. Enough for MLP heads and pooled
/// feature maps; anything else fails at load with the operator name.
class Model {
public:
    static Model load(const std::string& path);
    static Model parse(const std::vector<std::uint8_t>& bytes);

    Tensor run(const Tensor& input) const;

    const std::vector<std::int64_t>& input_dims() const { return input_dims_; }
    const std::string& input_name() const { return input_name_; }
    const std::string& output_name() const { return output_name_; }

private:
    struct Node {
        std::string op;
        std::vector<std::string> inputs;
        std::vector<std::string> outputs;
        std::map<std::string, std::int64_t> int_attrs;
        std::map<std::string, double> float_attrs;
        std::map<std::string, std::vector<std::int64_t>> ints_attrs;
    };

    std::vector<Node> nodes_;
    std::map<std::string, Tensor> initializers_;
    std::string input_name_;
    std::string output_name_;
    std::vector<std::int64_t> input_dims_;  // dynamic dims recorded as -1
};

}  // namespace onnx

/// Runs every image through the model named by spec.model_path. Images are
/// resized to spec.input_size (or the model's declared spatial size),
/// normalized per channel, fed as NCHW (rank-4 input) or flattened (rank-2),
/// and the output is pooled over any spatial dims and flattened to a vector.
std::vector<FeatureVector> extract_external(const std::vector<ImageU8>& images,
                                            const ExtractorSpec& spec);

}  // namespace gridpv
