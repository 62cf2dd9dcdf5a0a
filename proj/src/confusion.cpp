#include "cel/confusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cel/error.hpp"

namespace cel {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

std::vector<std::size_t> class_sizes(const EmbeddingBatch& batch) {
    std::vector<std::size_t> n(batch.num_classes, 0);
    for (auto l : batch.labels) ++n[l];
    for (std::size_t m = 0; m < n.size(); ++m) {
        if (n[m] == 0) throw Error(ErrorKind::EmptyClass, "class " + std::to_string(m) + " has no samples");
    }
    return n;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    return cells;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used == cell.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Format, path.string() + ": non-numeric cell '" + cell + "'");
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void EmbeddingBatch::validate() const {
    if (num_classes < 2) throw Error(ErrorKind::InvalidArgument, "embedding batch needs at least 2 classes");
    if (embedding_dim == 0) throw Error(ErrorKind::InvalidArgument, "embedding dimension must be >= 1");
    if (embeddings.size() != size() * embedding_dim)
        throw Error(ErrorKind::DimensionMismatch, "embedding buffer does not match n x embedding_dim");
    if (has_probabilities() && probabilities.size() != size() * num_classes)
        throw Error(ErrorKind::DimensionMismatch, "probability buffer does not match n x num_classes");
    for (auto l : labels) {
        if (l >= num_classes) throw Error(ErrorKind::InvalidArgument, "label out of range");
    }
    for (double v : embeddings) {
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite embedding");
    }
    if (has_probabilities()) {
        for (std::size_t i = 0; i < size(); ++i) {
            double sum = 0.0;
            for (double p : probability(i)) {
                if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorKind::InvalidArgument, "invalid probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw Error(ErrorKind::InvalidArgument, "probability row " + std::to_string(i) + " does not sum to 1");
        }
    }
}

const char* to_string(Criterion c) { return c == Criterion::Distance ? "distance" : "entropy"; }

Criterion criterion_from_string(const std::string& name) {
    if (name == "distance") return Criterion::Distance;
    if (name == "entropy") return Criterion::Entropy;
    throw Error(ErrorKind::InvalidArgument, "unknown confusion criterion '" + name + "'");
}

void compute_embedding(const DenseModel& scorer, std::span<const double> features, std::vector<double>& embedding,
                       std::vector<double>& probabilities) {
    auto trace = forward_trace(scorer, features);
    embedding = trace[trace.size() - 2];
    probabilities = softmax(trace.back());
}

EmbeddingBatch compute_embeddings(const DenseModel& scorer, const LabeledDataset& ds) {
    if (scorer.input_dim() != ds.feature_dim())
        throw Error(ErrorKind::DimensionMismatch, "scorer input size differs from the feature dimension");
    if (scorer.output_dim() != ds.num_classes())
        throw Error(ErrorKind::DimensionMismatch, "scorer output size differs from the number of classes");

    EmbeddingBatch batch;
    batch.num_classes = ds.num_classes();
    batch.embedding_dim = scorer.layer_dims()[scorer.num_layers() - 1];
    batch.labels = ds.labels();
    batch.embeddings.reserve(ds.size() * batch.embedding_dim);
    batch.probabilities.reserve(ds.size() * batch.num_classes);
    std::vector<double> g, p;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        compute_embedding(scorer, ds.features(i), g, p);
        batch.embeddings.insert(batch.embeddings.end(), g.begin(), g.end());
        batch.probabilities.insert(batch.probabilities.end(), p.begin(), p.end());
    }
    return batch;
}

ClassStatistics class_centers(const EmbeddingBatch& batch, const ClassPartition& partition) {
    if (partition.num_classes() != batch.num_classes)
        throw Error(ErrorKind::DimensionMismatch, "partition and batch disagree on the number of classes");
    ClassStatistics stats;
    stats.embedding_dim = batch.embedding_dim;
    stats.centers.assign(batch.num_classes, std::vector<double>(batch.embedding_dim, 0.0));
    for (std::size_t m = 0; m < batch.num_classes; ++m) {
        const auto& members = partition.per_class[m];
        if (members.empty()) throw Error(ErrorKind::EmptyClass, "class " + std::to_string(m) + " has no samples");
        auto& u = stats.centers[m];
        for (auto i : members) {
            if (i >= batch.size() || batch.labels[i] != m)
                throw Error(ErrorKind::InvalidArgument, "partition does not match batch labels");
            const auto g = batch.embedding(i);
            for (std::size_t k = 0; k < u.size(); ++k) u[k] += g[k];
        }
        for (double& v : u) v /= static_cast<double>(members.size());
    }
    return stats;
}

ClassStatistics class_centers(const EmbeddingBatch& batch) {
    ClassPartition p;
    p.per_class.resize(batch.num_classes);
    for (std::size_t i = 0; i < batch.size(); ++i) p.per_class[batch.labels[i]].push_back(i);
    return class_centers(batch, p);
}

ConfusionReport score_distance(const EmbeddingBatch& batch, const ClassStatistics& stats) {
    const std::size_t M = batch.num_classes;
    if (stats.centers.size() != M || stats.embedding_dim != batch.embedding_dim)
        throw Error(ErrorKind::DimensionMismatch, "class statistics do not match the embedding batch");
    const auto counts = class_sizes(batch);

    std::vector<double> sums(M, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t m = batch.labels[i];
        const auto g = batch.embedding(i);
        const double own = squared_distance(g, stats.centers[m]);
        double ratio_sum = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            if (j == m) continue;
            const double foreign = std::max(squared_distance(g, stats.centers[j]), kDistanceEpsilon);
            ratio_sum += own / foreign;
        }
        sums[m] += ratio_sum;
    }

    ConfusionReport report{Criterion::Distance, std::vector<double>(M)};
    for (std::size_t m = 0; m < M; ++m) report.scores[m] = 1.0 + sums[m] / static_cast<double>(counts[m]);
    return report;
}

ConfusionReport score_entropy(const EmbeddingBatch& batch) {
    if (!batch.has_probabilities()) throw Error(ErrorKind::InvalidArgument, "entropy criterion needs probabilities");
    const std::size_t M = batch.num_classes;
    const auto counts = class_sizes(batch);

    std::vector<double> sums(M, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double h = 0.0;
        for (double p : batch.probability(i)) {
            if (p > 0.0) h -= p * std::log(p);
        }
        sums[batch.labels[i]] += h;
    }

    ConfusionReport report{Criterion::Entropy, std::vector<double>(M)};
    for (std::size_t m = 0; m < M; ++m) report.scores[m] = sums[m] / static_cast<double>(counts[m]);
    return report;
}

ClassOrdering order_classes(const ConfusionReport& report) {
    for (double s : report.scores) {
        if (std::isnan(s)) throw Error(ErrorKind::InvalidArgument, "NaN confusion score");
    }
    ClassOrdering ordering;
    ordering.source = report;
    ordering.order.resize(report.scores.size());
    std::iota(ordering.order.begin(), ordering.order.end(), std::size_t{0});
    std::stable_sort(ordering.order.begin(), ordering.order.end(),
                     [&](std::size_t a, std::size_t b) { return report.scores[a] > report.scores[b]; });
    return ordering;
}

void save_embeddings_csv(const EmbeddingBatch& batch, const std::filesystem::path& path,
                         std::span<const std::string> class_names) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "label";
    for (std::size_t k = 0; k < batch.embedding_dim; ++k) out << ",g_" << k;
    if (batch.has_probabilities())
        for (std::size_t c = 0; c < batch.num_classes; ++c) out << ",p_" << c;
    out << '\n';
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto l = batch.labels[i];
        out << (class_names.empty() ? std::to_string(l) : class_names[l]);
        for (double v : batch.embedding(i)) out << ',' << format_double(v);
        if (batch.has_probabilities())
            for (double v : batch.probability(i)) out << ',' << format_double(v);
        out << '\n';
    }
}

EmbeddingBatch load_embeddings_csv(const std::filesystem::path& path, std::vector<std::string>* class_names) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Format, path.string() + ": missing header row");
    const auto header = split_line(line);
    if (header.empty() || header[0] != "label") throw Error(ErrorKind::Format, path.string() + ": first column must be 'label'");
    std::size_t e = 0, p = 0;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c].rfind("g_", 0) == 0 && p == 0) {
            ++e;
        } else if (header[c].rfind("p_", 0) == 0) {
            ++p;
        } else {
            throw Error(ErrorKind::Format, path.string() + ": unexpected column '" + header[c] + "'");
        }
    }
    if (e == 0) throw Error(ErrorKind::Format, path.string() + ": no embedding columns");

    std::vector<std::string> raw_labels;
    EmbeddingBatch batch;
    batch.embedding_dim = e;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw Error(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": ragged row");
        raw_labels.push_back(cells[0]);
        for (std::size_t c = 1; c <= e; ++c) batch.embeddings.push_back(parse_cell(cells[c], path));
        for (std::size_t c = e + 1; c < cells.size(); ++c) batch.probabilities.push_back(parse_cell(cells[c], path));
    }
    auto [ids, vocab] = densify_labels(raw_labels);
    batch.labels = std::move(ids);
    batch.num_classes = p > 0 ? p : vocab.size();
    if (p > 0 && vocab.size() > p)
        throw Error(ErrorKind::Format, path.string() + ": more distinct labels than probability columns");
    batch.validate();
    if (class_names) *class_names = std::move(vocab);
    return batch;
}

void save_scores_csv(const ConfusionReport& report, const std::filesystem::path& path,
                     std::span<const std::string> class_names) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "class_id,score\n";
    for (std::size_t m = 0; m < report.scores.size(); ++m) {
        out << (class_names.empty() ? std::to_string(m) : class_names[m]) << ',' << format_double(report.scores[m])
            << '\n';
    }
}

ConfusionReport load_scores_csv(const std::filesystem::path& path, Criterion criterion) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || split_line(line) != std::vector<std::string>{"class_id", "score"})
        throw Error(ErrorKind::Format, path.string() + ": expected header 'class_id,score'");
    std::vector<std::string> ids;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_line(line);
        if (cells.size() != 2) throw Error(ErrorKind::Format, path.string() + ": ragged row");
        ids.push_back(cells[0]);
        values.push_back(parse_cell(cells[1], path));
    }
    auto [dense, vocab] = densify_labels(ids);
    if (vocab.size() != ids.size()) throw Error(ErrorKind::Format, path.string() + ": duplicate class_id");
    ConfusionReport report{criterion, std::vector<double>(ids.size())};
    for (std::size_t r = 0; r < ids.size(); ++r) report.scores[dense[r]] = values[r];
    return report;
}

}  // namespace cel
