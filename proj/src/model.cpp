#include "cel/model.hpp"

#include <algorithm>
#include <cmath>

#include "cel/error.hpp"

namespace cel {

namespace {

void check_input(const DenseModel& model, std::span<const double> features) {
    if (features.size() != model.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch, "model expects " + std::to_string(model.input_dim()) +
                                                      " features, got " + std::to_string(features.size()));
    }
}

void check_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorKind::Divergence, "non-finite activation");
    }
}

// out = W x + b, accumulated from the bias in ascending input order.
void affine(const DenseModel& model, std::size_t layer, const double* x, double* out) {
    const std::size_t in = model.layer_dims()[layer];
    const std::size_t n_out = model.layer_dims()[layer + 1];
    const auto W = model.weights(layer);
    const auto b = model.biases(layer);
    for (std::size_t j = 0; j < n_out; ++j) {
        const double* row = W.data() + j * in;
        double acc = b[j];
        for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
        out[j] = acc;
    }
}

double logsumexp(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return mx + std::log(sum);
}

}  // namespace

DenseModel::DenseModel(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
    if (dims_.size() < 2) throw Error(ErrorKind::InvalidArgument, "layer_dims needs at least input and output sizes");
    for (auto d : dims_) {
        if (d == 0) throw Error(ErrorKind::InvalidArgument, "layer sizes must be >= 1");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        offsets_.push_back(offset);
        offset += dims_[l + 1] * dims_[l] + dims_[l + 1];
    }
    params_.assign(offset, 0.0);
}

DenseModel DenseModel::glorot(std::vector<std::size_t> layer_dims, Rng& rng) {
    DenseModel model(std::move(layer_dims));
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        const double fan = static_cast<double>(model.dims_[l] + model.dims_[l + 1]);
        const double limit = std::sqrt(6.0 / fan);
        for (double& w : model.weights(l)) w = rng.uniform(-limit, limit);
    }
    return model;
}

ActivationTrace forward_trace(const DenseModel& model, std::span<const double> features) {
    check_input(model, features);
    const auto& dims = model.layer_dims();
    ActivationTrace trace(dims.size());
    trace[0].assign(features.begin(), features.end());
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        trace[l + 1].resize(dims[l + 1]);
        affine(model, l, trace[l].data(), trace[l + 1].data());
        if (l + 1 < model.num_layers()) {
            for (double& a : trace[l + 1]) a = std::max(a, 0.0);
        }
    }
    check_finite(trace.back());
    return trace;
}

std::vector<double> forward(const DenseModel& model, std::span<const double> features) {
    return std::move(forward_trace(model, features).back());
}

std::vector<double> forward_batch(const DenseModel& model, const LabeledDataset& ds,
                                  std::span<const std::size_t> indices) {
    const auto& dims = model.layer_dims();
    if (ds.feature_dim() != model.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch, "model expects " + std::to_string(model.input_dim()) +
                                                      " features, dataset has " + std::to_string(ds.feature_dim()));
    }
    const std::size_t n = indices.size();
    std::vector<double> current(n * dims[0]);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = ds.features(indices[i]);
        std::copy(row.begin(), row.end(), current.begin() + static_cast<std::ptrdiff_t>(i * dims[0]));
    }
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        std::vector<double> next(n * dims[l + 1]);
        for (std::size_t i = 0; i < n; ++i) affine(model, l, current.data() + i * dims[l], next.data() + i * dims[l + 1]);
        if (l + 1 < model.num_layers()) {
            for (double& a : next) a = std::max(a, 0.0);
        }
        current = std::move(next);
    }
    check_finite(current);
    return current;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

double loss(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) throw Error(ErrorKind::InvalidArgument, "label out of range for logits");
    // lse >= max >= logits[label], so the result is non-negative up to rounding.
    return std::max(logsumexp(logits) - logits[label], 0.0);
}

double batch_loss(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch) {
    if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "empty batch");
    double total = 0.0;
    for (auto i : batch) total += loss(forward(model, ds.features(i)), ds.label(i));
    return total / static_cast<double>(batch.size());
}

BatchGradient gradients(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch) {
    if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "empty batch");
    const auto& dims = model.layer_dims();
    const std::size_t L = model.num_layers();

    BatchGradient out;
    out.grad.assign(model.num_parameters(), 0.0);
    std::vector<double> delta, prev_delta;
    double total_loss = 0.0;

    for (auto idx : batch) {
        const auto trace = forward_trace(model, ds.features(idx));
        const auto& logits = trace.back();
        const std::size_t label = ds.label(idx);
        total_loss += loss(logits, label);

        // d loss / d logits = softmax - onehot
        delta = softmax(logits);
        delta[label] -= 1.0;

        for (std::size_t l = L; l-- > 0;) {
            const std::size_t in = dims[l];
            const std::size_t n_out = dims[l + 1];
            const auto& a_in = trace[l];
            double* gW = out.grad.data() + model.layer_offset(l);
            double* gb = gW + n_out * in;
            for (std::size_t j = 0; j < n_out; ++j) {
                const double dj = delta[j];
                double* row = gW + j * in;
                for (std::size_t k = 0; k < in; ++k) row[k] += dj * a_in[k];
                gb[j] += dj;
            }
            if (l == 0) break;
            const auto W = model.weights(l);
            prev_delta.assign(in, 0.0);
            for (std::size_t j = 0; j < n_out; ++j) {
                const double dj = delta[j];
                const double* row = W.data() + j * in;
                for (std::size_t k = 0; k < in; ++k) prev_delta[k] += row[k] * dj;
            }
            // ReLU derivative, taken as 0 at the kink.
            for (std::size_t k = 0; k < in; ++k) {
                if (!(a_in[k] > 0.0)) prev_delta[k] = 0.0;
            }
            std::swap(delta, prev_delta);
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (double& g : out.grad) {
        g *= inv_n;
        if (!std::isfinite(g)) throw Error(ErrorKind::Divergence, "non-finite gradient");
    }
    out.mean_loss = total_loss * inv_n;
    return out;
}

double grad_check(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch,
                  double step, std::span<const double> analytic) {
    if (analytic.size() != model.num_parameters())
        throw Error(ErrorKind::DimensionMismatch, "analytic gradient has the wrong size");
    if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step must be > 0");
    DenseModel probe = model;
    auto params = probe.parameters();
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = batch_loss(probe, ds, batch);
        params[i] = saved - step;
        const double down = batch_loss(probe, ds, batch);
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

double grad_check(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> batch,
                  double step) {
    const auto g = gradients(model, ds, batch);
    return grad_check(model, ds, batch, step, g.grad);
}

void sgd_step(std::span<double> params, std::span<const double> grad, std::span<double> velocity, double lr,
              double momentum, double weight_decay) {
    if (params.size() != grad.size() || params.size() != velocity.size())
        throw Error(ErrorKind::DimensionMismatch, "sgd_step: parameter, gradient and velocity sizes differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * (grad[i] + weight_decay * params[i]);
        params[i] += velocity[i];
    }
}

}  // namespace cel
