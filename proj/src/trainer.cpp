#include "cel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cel/error.hpp"

namespace cel {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "cel-checkpoint";
constexpr int kCheckpointVersion = 1;

std::size_t drop_epoch(double fraction, std::size_t epochs) {
    // The small slack keeps products like 0.1 * 30 from rounding up a whole epoch.
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(epochs) - 1e-9));
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error(ErrorKind::Config, "batch_size must be >= 1");
    if (epochs < 1) throw Error(ErrorKind::Config, "epochs must be >= 1");
    if (!(initial_lr >= 0.0) || !std::isfinite(initial_lr)) throw Error(ErrorKind::Config, "lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::Config, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw Error(ErrorKind::Config, "weight_decay must be >= 0");
    if (!(lr_drop_factor > 0.0) || !std::isfinite(lr_drop_factor)) throw Error(ErrorKind::Config, "lr_drop_factor must be > 0");
    double prev = 0.0;
    for (double q : lr_drop_points) {
        if (!(q > prev && q < 1.0))
            throw Error(ErrorKind::Config, "lr_drop_points must be strictly increasing within (0, 1)");
        prev = q;
    }
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
    double lr = config.initial_lr;
    for (double q : config.lr_drop_points) {
        if (epoch >= drop_epoch(q, config.epochs)) lr *= config.lr_drop_factor;
    }
    return lr;
}

Checkpoint initial_checkpoint(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
    Rng rng(seed);
    Checkpoint ckpt;
    ckpt.model = DenseModel::glorot(std::move(layer_dims), rng);
    ckpt.rng_state = rng.state();
    return ckpt;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["layer_dims"] = ckpt.model.layer_dims();
    j["stage"] = ckpt.stage;
    j["epoch"] = ckpt.epoch;
    j["rng_state"] = ckpt.rng_state;
    const auto params = ckpt.model.parameters();
    j["parameters"] = std::vector<double>(params.begin(), params.end());
    return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        if (j.at("format").get<std::string>() != kCheckpointFormat)
            throw Error(ErrorKind::Format, "not a checkpoint file");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw Error(ErrorKind::Format, "unsupported checkpoint version " + j.at("version").dump());
        Checkpoint ckpt;
        ckpt.model = DenseModel(j.at("layer_dims").get<std::vector<std::size_t>>());
        const auto params = j.at("parameters").get<std::vector<double>>();
        if (params.size() != ckpt.model.num_parameters())
            throw Error(ErrorKind::Format, "checkpoint parameter count does not match layer_dims");
        std::copy(params.begin(), params.end(), ckpt.model.parameters().begin());
        ckpt.stage = j.at("stage").get<std::size_t>();
        ckpt.epoch = j.at("epoch").get<std::size_t>();
        ckpt.rng_state = j.at("rng_state").get<std::string>();
        return ckpt;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << checkpoint_to_json(ckpt) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_json(buf.str());
}

std::string metrics_to_json_line(const EpochMetrics& m) {
    json j;
    j["stage"] = m.stage;
    j["epoch"] = m.epoch;
    j["train_loss"] = m.train_loss;
    j["val_loss"] = m.val_loss;
    j["accuracy"] = m.accuracy;
    j["per_class_error"] = m.per_class_error;
    j["per_class_count"] = m.per_class_count;
    return j.dump();
}

void write_metrics_jsonl(std::span<const EpochMetrics> metrics, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    for (const auto& m : metrics) out << metrics_to_json_line(m) << '\n';
}

EpochMetrics evaluate(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> indices) {
    std::vector<std::size_t> all;
    if (indices.empty()) {
        all.resize(ds.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        indices = all;
    }
    if (indices.empty()) throw Error(ErrorKind::InvalidArgument, "evaluation set is empty");
    if (model.output_dim() != ds.num_classes())
        throw Error(ErrorKind::DimensionMismatch, "model output size differs from the number of classes");

    const std::size_t M = ds.num_classes();
    const auto logits = forward_batch(model, ds, indices);
    std::vector<std::size_t> wrong(M, 0);
    EpochMetrics m;
    m.per_class_count.assign(M, 0);
    double total_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::span<const double> row(logits.data() + i * M, M);
        const std::size_t label = ds.label(indices[i]);
        const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        total_loss += loss(row, label);
        ++m.per_class_count[label];
        if (pred == label) {
            ++correct;
        } else {
            ++wrong[label];
        }
    }
    m.val_loss = total_loss / static_cast<double>(indices.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    m.per_class_error.assign(M, 0.0);
    for (std::size_t c = 0; c < M; ++c) {
        if (m.per_class_count[c] > 0)
            m.per_class_error[c] = static_cast<double>(wrong[c]) / static_cast<double>(m.per_class_count[c]);
    }
    return m;
}

std::vector<std::span<const std::size_t>> epoch_batches(std::vector<std::size_t>& order, std::size_t batch_size,
                                                        Rng& rng) {
    if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
    rng.shuffle(std::span(order));
    std::vector<std::span<const std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        batches.emplace_back(order.data() + start, end - start);
    }
    return batches;
}

StageResult train_stage(const Checkpoint& init, std::span<const std::size_t> pool, const LabeledDataset& train,
                        const TrainConfig& config, const LabeledDataset* eval) {
    config.validate();
    if (pool.empty()) throw Error(ErrorKind::InvalidArgument, "training pool is empty");
    if (init.model.input_dim() != train.feature_dim() || init.model.output_dim() != train.num_classes())
        throw Error(ErrorKind::DimensionMismatch, "model shape does not match the training data");
    for (auto i : pool) {
        if (i >= train.size()) throw Error(ErrorKind::InvalidArgument, "pool index out of range");
    }

    StageResult result{init, {}};
    Checkpoint& ckpt = result.checkpoint;
    ckpt.stage = init.stage + 1;
    Rng rng;
    rng.set_state(init.rng_state);

    auto params = ckpt.model.parameters();
    std::vector<double> velocity(params.size(), 0.0);
    std::vector<std::size_t> order(pool.begin(), pool.end());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        double loss_sum = 0.0;
        try {
            for (const auto batch : epoch_batches(order, config.batch_size, rng)) {
                const auto g = gradients(ckpt.model, train, batch);
                if (!std::isfinite(g.mean_loss)) throw Error(ErrorKind::Divergence, "non-finite loss");
                loss_sum += g.mean_loss * static_cast<double>(batch.size());
                sgd_step(params, g.grad, velocity, lr, config.momentum, config.weight_decay);
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Divergence) throw;
            throw DivergenceError(epoch, "stage " + std::to_string(ckpt.stage) + " diverged at epoch " +
                                             std::to_string(epoch) + ": " + e.what());
        }

        EpochMetrics m;
        try {
            m = eval ? evaluate(ckpt.model, *eval) : evaluate(ckpt.model, train, pool);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Divergence) throw;
            throw DivergenceError(epoch, "stage " + std::to_string(ckpt.stage) + " diverged at epoch " +
                                             std::to_string(epoch) + ": " + e.what());
        }
        m.stage = ckpt.stage;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(order.size());
        result.metrics.push_back(std::move(m));
    }

    ckpt.epoch = init.epoch + config.epochs;
    ckpt.rng_state = rng.state();
    return result;
}

StageResult train_stage(std::vector<std::size_t> layer_dims, std::span<const std::size_t> pool,
                        const LabeledDataset& train, const TrainConfig& config, const LabeledDataset* eval) {
    return train_stage(initial_checkpoint(std::move(layer_dims), config.seed), pool, train, config, eval);
}

}  // namespace cel
