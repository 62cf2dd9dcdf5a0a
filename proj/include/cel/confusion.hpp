#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cel/dataset.hpp"
#include "cel/model.hpp"

namespace cel {

/// Scorer outputs for a set of samples: the penultimate-layer embedding and
/// the softmax of the output layer, plus the sample's label.
struct EmbeddingBatch {
    std::size_t num_classes = 0;
    std::size_t embedding_dim = 0;
    std::vector<double> embeddings;     ///< n x embedding_dim, row-major
    std::vector<double> probabilities;  ///< n x num_classes, row-major; may be empty
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> embedding(std::size_t i) const {
        return {embeddings.data() + i * embedding_dim, embedding_dim};
    }
    std::span<const double> probability(std::size_t i) const {
        return {probabilities.data() + i * num_classes, num_classes};
    }
    bool has_probabilities() const { return !probabilities.empty(); }

    /// Shapes, label range, finiteness, and that each probability row is a
    /// distribution within 1e-9.
    void validate() const;
};

/// Class centers u^m, one row per class.
struct ClassStatistics {
    std::size_t embedding_dim = 0;
    std::vector<std::vector<double>> centers;
};

enum class Criterion { Distance, Entropy };

const char* to_string(Criterion c);
Criterion criterion_from_string(const std::string& name);

struct ConfusionReport {
    Criterion criterion = Criterion::Distance;
    std::vector<double> scores;  ///< one per class
};

struct ClassOrdering {
    std::vector<std::size_t> order;  ///< order[r] = class at rank r (hardest first)
    ConfusionReport source;
};

/// Denominator guard for the distance criterion.
inline constexpr double kDistanceEpsilon = 1e-12;

/// Embedding and probability vector for one sample.
void compute_embedding(const DenseModel& scorer, std::span<const double> features, std::vector<double>& embedding,
                       std::vector<double>& probabilities);

EmbeddingBatch compute_embeddings(const DenseModel& scorer, const LabeledDataset& ds);

ClassStatistics class_centers(const EmbeddingBatch& batch, const ClassPartition& partition);
ClassStatistics class_centers(const EmbeddingBatch& batch);

/// S_dist(C_m) = 1 + mean over x in C_m of sum_{j != m} |g_x - u^m|^2 / |g_x - u^j|^2.
/// A foreign denominator below kDistanceEpsilon is replaced by the epsilon.
ConfusionReport score_distance(const EmbeddingBatch& batch, const ClassStatistics& stats);

/// S_entropy(C_m) = mean over x in C_m of the Shannon entropy (nats) of p_x.
ConfusionReport score_entropy(const EmbeddingBatch& batch);

/// Descending scores, ties by ascending class id.
ClassOrdering order_classes(const ConfusionReport& report);

void save_embeddings_csv(const EmbeddingBatch& batch, const std::filesystem::path& path,
                         std::span<const std::string> class_names = {});
/// Reads `label,g_0..g_{e-1}` with optional trailing `p_0..p_{M-1}` columns.
/// Labels are densified; the vocabulary is returned through class_names.
EmbeddingBatch load_embeddings_csv(const std::filesystem::path& path, std::vector<std::string>* class_names = nullptr);

void save_scores_csv(const ConfusionReport& report, const std::filesystem::path& path,
                     std::span<const std::string> class_names = {});
ConfusionReport load_scores_csv(const std::filesystem::path& path, Criterion criterion = Criterion::Distance);

}  // namespace cel
