#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "illmtsc/rng.hpp"

namespace illmtsc {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fully-connected network with tanh hidden activations and a linear output
// layer. Parameters live in one flat vector (row-major weight matrices, then
// biases, per layer) so the optimizer and checkpoint code can treat them
// uniformly.
class Mlp {
public:
    explicit Mlp(std::vector<int> layer_sizes);

    // Scaled-uniform init, U(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
    // biases zero. Draw order is layer-major, row-major; checkpoints and
    // golden fixtures depend on it.
    void init_glorot(Rng& rng);

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    std::vector<double> forward(const std::vector<double>& x) const;

    // activations[0] is the input, activations[l] the post-tanh output of
    // hidden layer l, activations.back() the raw output of the linear head.
    struct Trace {
        std::vector<std::vector<double>> activations;
    };

    std::vector<double> forward_trace(const std::vector<double>& x, Trace& trace) const;

    // Accumulates d(loss)/d(params) into grad (size param_count) given
    // d(loss)/d(raw output) for the traced forward pass.
    void backward(const Trace& trace, const std::vector<double>& d_output,
                  std::vector<double>& grad) const;

private:
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + static_cast<std::size_t>(sizes_[layer] * sizes_[layer + 1]);
    }

    std::vector<int> sizes_;
    std::vector<std::size_t> offsets_;  // start of each layer's block in params_
    std::vector<double> params_;
};

}  // namespace illmtsc
