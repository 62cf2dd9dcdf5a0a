#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cel/dataset.hpp"
#include "cel/model.hpp"

namespace cel {

struct TrainConfig {
    std::size_t batch_size = 128;
    double initial_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t epochs = 1;
    /// Fractions of `epochs` after which the learning rate is multiplied by
    /// lr_drop_factor. Strictly increasing, each in (0, 1).
    std::vector<double> lr_drop_points{0.5, 0.75};
    double lr_drop_factor = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// initial_lr * lr_drop_factor^(drops passed). A drop at fraction q takes
/// effect from epoch index ceil(q * epochs).
double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

/// Model parameters plus what is needed to continue the run exactly.
struct Checkpoint {
    DenseModel model;
    std::size_t stage = 0;       ///< number of completed stages
    std::size_t epoch = 0;       ///< epochs run so far, across stages
    std::string rng_state;       ///< serialized Rng driving shuffles

    bool operator==(const Checkpoint&) const = default;
};

/// Glorot-initialized model from a generator seeded with `seed`; the
/// generator continues as the checkpoint's shuffle stream.
Checkpoint initial_checkpoint(std::vector<std::size_t> layer_dims, std::uint64_t seed);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

struct EpochMetrics {
    std::size_t stage = 0;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double accuracy = 0.0;
    /// Test error per class; 0 for classes absent from the evaluation set.
    std::vector<double> per_class_error;
    std::vector<std::size_t> per_class_count;

    double overall_error() const { return 1.0 - accuracy; }
    bool operator==(const EpochMetrics&) const = default;
};

/// One JSON object per line with the EpochMetrics fields.
std::string metrics_to_json_line(const EpochMetrics& m);
void write_metrics_jsonl(std::span<const EpochMetrics> metrics, const std::filesystem::path& path);

/// Argmax-of-logits predictions (ties to the lower class id) over the rows
/// in `indices`, or the whole dataset when indices is empty. Fills
/// val_loss, accuracy and the per-class error vector.
EpochMetrics evaluate(const DenseModel& model, const LabeledDataset& ds, std::span<const std::size_t> indices = {});

/// Shuffles `order` in place and cuts it into consecutive batches of
/// batch_size; the final batch may be short. Every element appears in
/// exactly one batch.
std::vector<std::span<const std::size_t>> epoch_batches(std::vector<std::size_t>& order, std::size_t batch_size,
                                                        Rng& rng);

struct StageResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> metrics;
};

/// Runs config.epochs epochs of shuffled mini-batch SGD over `pool` only,
/// starting from init's exact parameters. Velocity starts at zero and the
/// learning-rate schedule is relative to this stage. Metrics are evaluated
/// on `eval` when given, otherwise on the pool.
StageResult train_stage(const Checkpoint& init, std::span<const std::size_t> pool, const LabeledDataset& train,
                        const TrainConfig& config, const LabeledDataset* eval = nullptr);

/// Fresh-start overload: initial_checkpoint(layer_dims, config.seed).
StageResult train_stage(std::vector<std::size_t> layer_dims, std::span<const std::size_t> pool,
                        const LabeledDataset& train, const TrainConfig& config,
                        const LabeledDataset* eval = nullptr);

}  // namespace cel
