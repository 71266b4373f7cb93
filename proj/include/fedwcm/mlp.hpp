#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fedwcm/errors.hpp"
#include "fedwcm/params.hpp"
#include "fedwcm/rng.hpp"
#include "fedwcm/tensor.hpp"

namespace fedwcm {

// Network architecture: input -> hidden[0] ReLU -> ... -> num_classes linear.
struct MlpSpec {
    std::size_t input_dim = 16;
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t num_classes = 10;
};

// Per-layer uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases zero.
inline ModelParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
    if (spec.input_dim == 0 || spec.num_classes < 2) {
        throw InputError("init_mlp: need input_dim > 0 and num_classes >= 2");
    }
    std::vector<std::size_t> dims;
    dims.push_back(spec.input_dim);
    dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
    dims.push_back(spec.num_classes);

    RandomEngine rng(seed);
    ModelParams m;
    m.layers.reserve(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        DenseLayer layer{Tensor2(dims[l], dims[l + 1]), Tensor2(1, dims[l + 1])};
        for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

namespace detail {

inline void require_model_composes(const ModelParams& m) {
    if (m.layers.empty()) throw DimensionError("model has no layers");
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
            throw DimensionError("layer " + std::to_string(l) + ": bias shape " +
                                 layer.bias.shape_str() + " does not match weight " +
                                 layer.weight.shape_str());
        }
        if (l + 1 < m.layers.size() &&
            layer.weight.cols() != m.layers[l + 1].weight.rows()) {
            throw DimensionError("layers " + std::to_string(l) + "->" + std::to_string(l + 1) +
                                 " do not compose");
        }
    }
}

// z = x . W + b (bias broadcast over rows)
inline Tensor2 affine(const Tensor2& x, const DenseLayer& layer) {
    Tensor2 z = matmul(x, layer.weight);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += layer.bias(0, j);
    }
    return z;
}

inline void relu_in_place(Tensor2& t) {
    for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
}

}  // namespace detail

// Forward pass to logits. Hidden layers ReLU, output linear.
inline Tensor2 forward(const ModelParams& model, const Tensor2& batch_x) {
    detail::require_model_composes(model);
    if (batch_x.cols() != model.layers.front().weight.rows()) {
        throw DimensionError("forward: input dim " + std::to_string(batch_x.cols()) +
                             " != first layer dim " +
                             std::to_string(model.layers.front().weight.rows()));
    }
    Tensor2 a = batch_x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        a = detail::affine(a, model.layers[l]);
        if (l + 1 < model.layers.size()) detail::relu_in_place(a);
    }
    return a;
}

// Post-ReLU activations of every hidden layer, for the concentration
// diagnostic. Returns one (batch x width) tensor per hidden layer.
inline std::vector<Tensor2> hidden_activations(const ModelParams& model,
                                               const Tensor2& batch_x) {
    detail::require_model_composes(model);
    std::vector<Tensor2> acts;
    Tensor2 a = batch_x;
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        a = detail::affine(a, model.layers[l]);
        detail::relu_in_place(a);
        acts.push_back(a);
    }
    return acts;
}

struct LossGrad {
    double loss = 0.0;
    Gradient grad;
};

// Mean softmax cross-entropy over the batch plus its exact analytic gradient.
// The softmax is evaluated through a log-sum-exp shift so momentum-amplified
// logits cannot overflow.
inline LossGrad loss_and_grad(const ModelParams& model, const Tensor2& batch_x,
                              std::span<const int> labels) {
    detail::require_model_composes(model);
    const std::size_t batch = batch_x.rows();
    if (batch == 0) throw InputError("loss_and_grad: empty batch");
    if (labels.size() != batch) {
        throw DimensionError("loss_and_grad: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(batch) + " rows");
    }
    const std::size_t num_classes = model.layers.back().weight.cols();
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw InputError("loss_and_grad: label " + std::to_string(y) +
                             " out of range [0, " + std::to_string(num_classes) + ")");
        }
    }

    // Forward, keeping every layer input for the backward pass.
    const std::size_t L = model.layers.size();
    std::vector<Tensor2> inputs;  // inputs[l] feeds layer l
    inputs.reserve(L);
    Tensor2 a = batch_x;
    for (std::size_t l = 0; l < L; ++l) {
        inputs.push_back(a);
        a = detail::affine(a, model.layers[l]);
        if (l + 1 < L) detail::relu_in_place(a);
    }
    Tensor2& logits = a;

    // delta = (softmax(logits) - onehot(y)) / batch; loss accumulated alongside.
    double loss = 0.0;
    Tensor2 delta(batch, num_classes);
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        double max_logit = logits(i, 0);
        for (std::size_t j = 1; j < num_classes; ++j) max_logit = std::max(max_logit, logits(i, j));
        double sum_exp = 0.0;
        for (std::size_t j = 0; j < num_classes; ++j) sum_exp += std::exp(logits(i, j) - max_logit);
        const double log_sum = max_logit + std::log(sum_exp);
        const auto y = static_cast<std::size_t>(labels[i]);
        loss += log_sum - logits(i, y);
        for (std::size_t j = 0; j < num_classes; ++j) {
            const double p = std::exp(logits(i, j) - max_logit) / sum_exp;
            delta(i, j) = (p - (j == y ? 1.0 : 0.0)) * inv_batch;
        }
    }
    loss *= inv_batch;

    // Backward.
    LossGrad out;
    out.loss = loss;
    out.grad.layers.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        out.grad.layers[l].weight = matmul_at_b(inputs[l], delta);
        Tensor2 bias_grad(1, delta.cols());
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            for (std::size_t j = 0; j < delta.cols(); ++j) bias_grad(0, j) += delta(i, j);
        }
        out.grad.layers[l].bias = std::move(bias_grad);
        if (l > 0) {
            delta = matmul_a_bt(delta, model.layers[l].weight);
            // ReLU mask from the stored layer input (which is post-ReLU output of l-1).
            const Tensor2& post = inputs[l];
            for (std::size_t i = 0; i < delta.rows(); ++i) {
                for (std::size_t j = 0; j < delta.cols(); ++j) {
                    if (post(i, j) <= 0.0) delta(i, j) = 0.0;
                }
            }
        }
    }

    if (!std::isfinite(out.loss) || !all_finite(out.grad)) {
        throw NumericError("loss_and_grad: non-finite loss or gradient");
    }
    return out;
}

}  // namespace fedwcm
