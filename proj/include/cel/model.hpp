#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cel/dataset.hpp"
#include "cel/rng.hpp"

namespace cel {

/// Fully connected ReLU network with a linear output layer.
///
/// All parameters live in one flat vector. Layer l (0-based) stores its
/// weight matrix (out x in, row-major) followed by its bias vector, so the
/// flat vector doubles as the optimizer state layout and the checkpoint
/// payload.
class DenseModel {
public:
    DenseModel() = default;

    /// Zero-initialized model. layer_dims = [d, h_1, ..., h_L, M], at least
    /// two entries, all >= 1.
    explicit DenseModel(std::vector<std::size_t> layer_dims);

    /// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
    static DenseModel glorot(std::vector<std::size_t> layer_dims, Rng& rng);

    const std::vector<std::size_t>& layer_dims() const { return dims_; }
    std::size_t num_layers() const { return dims_.size() - 1; }
    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }
    std::size_t num_parameters() const { return params_.size(); }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    std::span<const double> weights(std::size_t layer) const {
        return {params_.data() + offsets_[layer], dims_[layer + 1] * dims_[layer]};
    }
    std::span<const double> biases(std::size_t layer) const {
        return {params_.data() + offsets_[layer] + dims_[layer + 1] * dims_[layer], dims_[layer + 1]};
    }
    std::span<double> weights(std::size_t layer) {
        return {params_.data() + offsets_[layer], dims_[layer + 1] * dims_[layer]};
    }
    std::span<double> biases(std::size_t layer) {
        return {params_.data() + offsets_[layer] + dims_[layer + 1] * dims_[layer], dims_[layer + 1]};
    }
    std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }

    bool operator==(const DenseModel&) const = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

/// Activations of every layer for one input: [0] is the input itself, [l]
/// the post-ReLU output of hidden layer l, back() the output logits.
using ActivationTrace = std::vector<std::vector<double>>;

ActivationTrace forward_trace(const DenseModel& model, std::span<const double> features);

/// Output logits for one sample. Throws on dimension mismatch and on
/// non-finite activations.
std::vector<double> forward(const DenseModel& model, std::span<const double> features);

/// Logits for the listed rows, computed layer by layer over the whole batch.
/// Row i of the result (n x M, row-major) equals forward() on sample i bit
/// for bit.
std::vector<double> forward_batch(const DenseModel& model, const LabeledDataset& ds,
                                  std::span<const std::size_t> indices);

/// Softmax with max subtraction.
std::vector<double> softmax(std::span<const double> logits);

/// Softmax cross-entropy of one sample.
double loss(std::span<const double> logits, std::size_t label);

struct BatchGradient {
    std::vector<double> grad;  ///< same layout as DenseModel::parameters()
    double mean_loss = 0.0;
};

/// Gradient of the mean batch loss by backpropagation. Samples are summed in
/// batch order, so the result is deterministic.
BatchGradient gradients(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch);

/// Mean batch loss, without gradients.
double batch_loss(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch);

/// Worst relative error between `analytic` and central differences of the
/// mean batch loss with the given step. Relative error per entry is
/// |a - n| / max(|a|, |n|, 1e-6).
double grad_check(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch,
                  double step, std::span<const double> analytic);

/// Same, checking the gradient produced by gradients().
double grad_check(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch,
                  double step = 1e-5);

/// velocity <- momentum * velocity - lr * (grad + weight_decay * params);
/// params <- params + velocity.
void sgd_step(std::span<double> params, std::span<const double> grad, std::span<double> velocity, double lr,
              double momentum, double weight_decay);

}  // namespace cel
