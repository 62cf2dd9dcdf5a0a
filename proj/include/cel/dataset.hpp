#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cel {

/// Samples with dense class labels in [0, num_classes). Features are stored
/// row-major in one contiguous buffer.
class LabeledDataset {
public:
    LabeledDataset() = default;

    /// Validates shapes, label range, finiteness and num_classes >= 2.
    /// class_names defaults to "0", "1", ... when empty.
    LabeledDataset(std::size_t feature_dim, std::size_t num_classes, std::vector<double> features,
                   std::vector<std::size_t> labels, std::vector<std::string> class_names = {});

    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t num_classes() const { return num_classes_; }

    std::span<const double> features(std::size_t i) const {
        return {features_.data() + i * feature_dim_, feature_dim_};
    }
    std::size_t label(std::size_t i) const { return labels_[i]; }

    const std::vector<double>& feature_buffer() const { return features_; }
    const std::vector<std::size_t>& labels() const { return labels_; }

    /// Original label vocabulary, indexed by dense class id.
    const std::vector<std::string>& class_names() const { return class_names_; }

    /// Copy of the listed rows, in the given order. Keeps M and the vocabulary.
    LabeledDataset subset(std::span<const std::size_t> indices) const;

    /// Stable 64-bit FNV-1a fingerprint of features and labels.
    std::uint64_t fingerprint() const;

    bool operator==(const LabeledDataset&) const = default;

private:
    std::size_t feature_dim_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<double> features_;
    std::vector<std::size_t> labels_;
    std::vector<std::string> class_names_;
};

/// per_class[m] holds the indices of every sample with label m, in dataset order.
struct ClassPartition {
    std::vector<std::vector<std::size_t>> per_class;

    std::size_t num_classes() const { return per_class.size(); }
    std::size_t total() const;
};

struct BlobSpec {
    std::size_t num_classes = 8;
    std::size_t per_class_count = 100;
    std::size_t feature_dim = 2;
    /// Explicit class means. When empty they are placed automatically so that
    /// overlap pairs sit within one stddev and every other pair is at least
    /// six stddevs apart.
    std::vector<std::vector<double>> class_means;
    double class_stddev = 1.0;
    std::vector<std::pair<std::size_t, std::size_t>> overlap_pairs;
    std::uint64_t seed = 0;
};

LabeledDataset load_csv(const std::filesystem::path& path, const std::string& label_column);
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path,
              const std::string& label_column = "label");

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

/// Class means the generator would use for spec; validates the separation
/// constraints for explicit means.
std::vector<std::vector<double>> blob_means(const BlobSpec& spec);

/// Samples are emitted class-major: all of class 0, then class 1, ...
LabeledDataset generate_blobs(const BlobSpec& spec);

ClassPartition partition_by_class(const LabeledDataset& ds);

struct TrainTestSplit {
    LabeledDataset train;
    LabeledDataset test;
};

/// Stratified split: class m sends round(N_m * test_fraction) samples to the
/// test set. Both halves keep the original relative order of samples.
TrainTestSplit split_train_test(const LabeledDataset& ds, double test_fraction, std::uint64_t seed);

/// Shifts and scales every feature of both halves by the train half's mean
/// and standard deviation. Constant features are only shifted.
void standardize(TrainTestSplit& split);

/// Maps raw label tokens to dense ids. Integer tokens are ordered numerically,
/// anything else by first appearance. Returns the ids and the vocabulary.
std::pair<std::vector<std::size_t>, std::vector<std::string>> densify_labels(
    const std::vector<std::string>& raw);

}  // namespace cel
