#include "illmtsc/mlp.hpp"

#include <cmath>
#include <string>

namespace illmtsc {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) {
            throw std::invalid_argument("Mlp layer sizes must be positive");
        }
        offsets_.push_back(total);
        total += static_cast<std::size_t>(sizes_[l] * sizes_[l + 1]) +
                 static_cast<std::size_t>(sizes_[l + 1]);
    }
    params_.assign(total, 0.0);
}

void Mlp::init_glorot(Rng& rng) {
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const int fan_in = sizes_[l];
        const int fan_out = sizes_[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        const std::size_t w0 = weight_offset(l);
        for (int k = 0; k < fan_in * fan_out; ++k) {
            params_[w0 + static_cast<std::size_t>(k)] = a * (2.0 * rng.uniform() - 1.0);
        }
        const std::size_t b0 = bias_offset(l);
        for (int k = 0; k < fan_out; ++k) {
            params_[b0 + static_cast<std::size_t>(k)] = 0.0;
        }
    }
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
    Trace trace;
    return forward_trace(x, trace);
}

std::vector<double> Mlp::forward_trace(const std::vector<double>& x, Trace& trace) const {
    if (static_cast<int>(x.size()) != input_size()) {
        throw std::invalid_argument("Mlp::forward: input size " + std::to_string(x.size()) +
                                    ", expected " + std::to_string(input_size()));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw NumericError("Mlp::forward: non-finite input");
    }
    const std::size_t n_layers = sizes_.size() - 1;
    trace.activations.assign(n_layers + 1, {});
    trace.activations[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        const std::vector<double>& h = trace.activations[l];
        std::vector<double> z(static_cast<std::size_t>(out));
        const std::size_t w0 = weight_offset(l);
        const std::size_t b0 = bias_offset(l);
        for (int o = 0; o < out; ++o) {
            double acc = params_[b0 + static_cast<std::size_t>(o)];
            const std::size_t row = w0 + static_cast<std::size_t>(o * in);
            for (int i = 0; i < in; ++i) {
                acc += params_[row + static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
            }
            z[static_cast<std::size_t>(o)] = acc;
        }
        if (l + 1 < n_layers) {
            for (double& v : z) v = std::tanh(v);
        }
        trace.activations[l + 1] = std::move(z);
    }
    return trace.activations.back();
}

void Mlp::backward(const Trace& trace, const std::vector<double>& d_output,
                   std::vector<double>& grad) const {
    const std::size_t n_layers = sizes_.size() - 1;
    if (trace.activations.size() != n_layers + 1) {
        throw std::invalid_argument("Mlp::backward: trace does not match this network");
    }
    if (grad.size() != params_.size()) {
        throw std::invalid_argument("Mlp::backward: gradient buffer size mismatch");
    }
    std::vector<double> d = d_output;
    for (std::size_t l = n_layers; l-- > 0;) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        const std::vector<double>& h = trace.activations[l];
        const std::size_t w0 = weight_offset(l);
        const std::size_t b0 = bias_offset(l);
        for (int o = 0; o < out; ++o) {
            const double dz = d[static_cast<std::size_t>(o)];
            grad[b0 + static_cast<std::size_t>(o)] += dz;
            const std::size_t row = w0 + static_cast<std::size_t>(o * in);
            for (int i = 0; i < in; ++i) {
                grad[row + static_cast<std::size_t>(i)] += dz * h[static_cast<std::size_t>(i)];
            }
        }
        if (l == 0) break;
        std::vector<double> d_prev(static_cast<std::size_t>(in), 0.0);
        for (int o = 0; o < out; ++o) {
            const double dz = d[static_cast<std::size_t>(o)];
            const std::size_t row = w0 + static_cast<std::size_t>(o * in);
            for (int i = 0; i < in; ++i) {
                d_prev[static_cast<std::size_t>(i)] += params_[row + static_cast<std::size_t>(i)] * dz;
            }
        }
        // h here is the post-tanh output of layer l-1
        for (int i = 0; i < in; ++i) {
            const double hv = h[static_cast<std::size_t>(i)];
            d_prev[static_cast<std::size_t>(i)] *= 1.0 - hv * hv;
        }
        d = std::move(d_prev);
    }
}

}  // namespace illmtsc
