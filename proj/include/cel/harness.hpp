#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cel/confusion.hpp"
#include "cel/dataset.hpp"
#include "cel/scheduler.hpp"
#include "cel/trainer.hpp"

namespace cel {

enum class DataSource { Blobs, Csv, Idx };
enum class OrderMode { Distance, Entropy, Natural, Random };

const char* to_string(OrderMode mode);
OrderMode order_mode_from_string(const std::string& name);

struct DataConfig {
    DataSource source = DataSource::Blobs;
    BlobSpec blobs;
    std::filesystem::path csv_path;
    std::string label_column = "label";
    std::filesystem::path idx_images;
    std::filesystem::path idx_labels;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 0;
    bool standardize = true;  ///< z-score features with train statistics
};

struct NetworkConfig {
    std::vector<std::size_t> hidden;
    TrainConfig train;  ///< epochs and seed are filled per run
};

struct ExperimentConfig {
    DataConfig data;
    NetworkConfig scorer{{16}, {}};
    std::optional<std::size_t> scorer_epochs;  ///< defaults to round(E / lambda)
    NetworkConfig model{{64, 64}, {}};
    OrderMode order = OrderMode::Distance;
    std::size_t num_stages = 5;
    std::size_t epochs = 30;  ///< E, the final-stage budget
    double lambda = 5.0;
    std::optional<std::vector<std::size_t>> stage_epochs;
    std::optional<std::size_t> normal_epochs;  ///< defaults to E
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir;  ///< empty: nothing is written

    void validate() const;
    std::size_t resolved_scorer_epochs() const;
};

/// Parses the JSON config. Unknown keys are rejected at every level. Relative
/// data paths are resolved against base_dir.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct StageRecord {
    std::size_t stage = 0;
    std::vector<std::size_t> pool_classes;  ///< sorted class ids
    std::size_t epochs = 0;
    std::vector<EpochMetrics> metrics;

    bool operator==(const StageRecord&) const = default;
};

struct SeedRun {
    std::uint64_t seed = 0;
    ClassOrdering ordering;
    double final_test_error = 0.0;
    std::vector<double> per_class_test_error;
    double measured_cost = 0.0;
    std::vector<StageRecord> stages;
    Checkpoint final_checkpoint;
};

struct Aggregate {
    double mean_error = 0.0;
    double stddev_error = 0.0;  ///< sample standard deviation, 0 for one seed
    double best_error = 0.0;
    std::uint64_t best_seed = 0;
    std::vector<double> mean_per_class_error;
    std::vector<double> stddev_per_class_error;
    double mean_measured_cost = 0.0;
};

struct ExperimentReport {
    std::string mode;  ///< "cel" or "normal"
    OrderMode order = OrderMode::Natural;
    std::size_t num_stages = 1;
    double lambda = 1.0;
    std::size_t final_epochs = 1;
    std::vector<std::string> class_names;
    std::uint64_t test_fingerprint = 0;
    std::vector<std::size_t> test_class_counts;
    std::vector<SeedRun> runs;
    Aggregate aggregate;
};

/// Loads or generates the data and applies the stratified split.
TrainTestSplit prepare_data(const DataConfig& config);

/// Class ordering for one seed: trains the scorer for distance/entropy,
/// identity for natural, seeded permutation for random.
ClassOrdering compute_ordering(const ExperimentConfig& config, const LabeledDataset& train, std::uint64_t seed);

/// Trains the scorer network used by the confusion criteria.
DenseModel train_scorer(const ExperimentConfig& config, const LabeledDataset& train, std::uint64_t seed);

SeedRun run_cel_seed(const ExperimentConfig& config, const TrainTestSplit& data, std::uint64_t seed);
SeedRun run_normal_seed(const ExperimentConfig& config, const TrainTestSplit& data, std::uint64_t seed);

/// Runs every seed (concurrently), aggregates, and writes outputs when
/// config.output_dir is set.
ExperimentReport run_cel(const ExperimentConfig& config);
ExperimentReport run_normal(const ExperimentConfig& config);

Aggregate aggregate_runs(const std::vector<SeedRun>& runs);

/// Full report.json content.
std::string report_to_json(const ExperimentReport& report);
/// Only the per-seed results and aggregate, without ordering or mode
/// metadata. Equal for run_cel with K = 1 and run_normal.
std::string results_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
ExperimentReport load_report(const std::filesystem::path& path);
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

struct SeedDelta {
    std::uint64_t seed = 0;
    double overall_delta = 0.0;
    std::vector<double> per_class_delta;
};

/// Deltas are b - a; negative means b has lower error.
struct Comparison {
    std::vector<std::string> class_names;
    std::vector<std::size_t> preferential_classes;  ///< b's first-stage classes
    double mean_error_a = 0.0;
    double mean_error_b = 0.0;
    double overall_delta = 0.0;
    std::vector<double> per_class_mean_a;
    std::vector<double> per_class_mean_b;
    std::vector<double> per_class_delta;
    std::vector<SeedDelta> per_seed;
};

Comparison compare(const ExperimentReport& a, const ExperimentReport& b);
std::string comparison_table(const Comparison& c);
std::string comparison_to_json(const Comparison& c);

std::string ordering_csv(const ClassOrdering& ordering, std::span<const std::string> class_names);

}  // namespace cel
