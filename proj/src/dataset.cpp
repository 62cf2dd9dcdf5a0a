#include "cel/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cel/error.hpp"
#include "cel/rng.hpp"

namespace cel {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_int(std::string_view s, long long& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (bytes.size() < offset + 4) throw Error(ErrorKind::Format, "truncated IDX header in " + path.string());
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

LabeledDataset::LabeledDataset(std::size_t feature_dim, std::size_t num_classes, std::vector<double> features,
                               std::vector<std::size_t> labels, std::vector<std::string> class_names)
    : feature_dim_(feature_dim),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)) {
    if (feature_dim_ == 0) throw Error(ErrorKind::InvalidArgument, "feature dimension must be >= 1");
    if (num_classes_ < 2) throw Error(ErrorKind::InvalidArgument, "a dataset needs at least 2 classes");
    if (features_.size() != labels_.size() * feature_dim_)
        throw Error(ErrorKind::DimensionMismatch, "feature buffer size does not match samples x feature_dim");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] >= num_classes_)
            throw Error(ErrorKind::InvalidArgument, "label " + std::to_string(labels_[i]) + " out of range");
    }
    for (double v : features_) {
        if (!std::isfinite(v)) throw Error(ErrorKind::Format, "non-finite feature value");
    }
    if (class_names_.empty()) {
        for (std::size_t m = 0; m < num_classes_; ++m) class_names_.push_back(std::to_string(m));
    } else if (class_names_.size() != num_classes_) {
        throw Error(ErrorKind::InvalidArgument, "class_names must have one entry per class");
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    std::vector<double> features;
    std::vector<std::size_t> labels;
    features.reserve(indices.size() * feature_dim_);
    labels.reserve(indices.size());
    for (auto i : indices) {
        if (i >= size()) throw Error(ErrorKind::InvalidArgument, "subset index out of range");
        auto row = this->features(i);
        features.insert(features.end(), row.begin(), row.end());
        labels.push_back(labels_[i]);
    }
    return {feature_dim_, num_classes_, std::move(features), std::move(labels), class_names_};
}

std::uint64_t LabeledDataset::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t word) {
        for (int b = 0; b < 8; ++b) {
            h ^= (word >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    mix(feature_dim_);
    mix(num_classes_);
    for (double v : features_) mix(std::bit_cast<std::uint64_t>(v));
    for (auto l : labels_) mix(l);
    return h;
}

std::size_t ClassPartition::total() const {
    std::size_t n = 0;
    for (const auto& c : per_class) n += c.size();
    return n;
}

std::pair<std::vector<std::size_t>, std::vector<std::string>> densify_labels(const std::vector<std::string>& raw) {
    std::vector<std::size_t> ids(raw.size());
    std::vector<std::string> vocab;

    std::vector<long long> numeric(raw.size());
    bool all_int = true;
    for (std::size_t i = 0; i < raw.size() && all_int; ++i) all_int = parse_int(raw[i], numeric[i]);

    if (all_int) {
        std::map<long long, std::size_t> order;
        for (auto v : numeric) order.emplace(v, 0);
        std::size_t next = 0;
        for (auto& [value, id] : order) {
            id = next++;
            vocab.push_back(std::to_string(value));
        }
        for (std::size_t i = 0; i < raw.size(); ++i) ids[i] = order.at(numeric[i]);
    } else {
        std::unordered_map<std::string, std::size_t> seen;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            auto [it, inserted] = seen.emplace(raw[i], vocab.size());
            if (inserted) vocab.push_back(raw[i]);
            ids[i] = it->second;
        }
    }
    return {std::move(ids), std::move(vocab)};
}

LabeledDataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Format, path.string() + ": missing header row");
    const auto header = split_commas(line);
    const auto label_it = std::find(header.begin(), header.end(), std::string_view(label_column));
    if (label_it == header.end())
        throw Error(ErrorKind::Format, path.string() + ": no column named '" + label_column + "'");
    const auto label_idx = static_cast<std::size_t>(label_it - header.begin());
    const std::size_t arity = header.size();
    if (arity < 2) throw Error(ErrorKind::Format, path.string() + ": need at least one feature column");

    std::vector<double> features;
    std::vector<std::string> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != arity) {
            throw Error(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": ragged row (" +
                                               std::to_string(cells.size()) + " cells, expected " +
                                               std::to_string(arity) + ")");
        }
        for (std::size_t c = 0; c < arity; ++c) {
            if (c == label_idx) {
                raw_labels.emplace_back(cells[c]);
                continue;
            }
            double v;
            if (!parse_double(cells[c], v) || !std::isfinite(v)) {
                throw Error(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) +
                                                   ": non-numeric feature cell '" + std::string(cells[c]) + "'");
            }
            features.push_back(v);
        }
    }

    auto [labels, vocab] = densify_labels(raw_labels);
    if (vocab.size() < 2)
        throw Error(ErrorKind::Format, path.string() + ": need at least 2 distinct labels, found " +
                                           std::to_string(vocab.size()));
    return {arity - 1, vocab.size(), std::move(features), std::move(labels), std::move(vocab)};
}

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    for (std::size_t j = 0; j < ds.feature_dim(); ++j) out << 'f' << j << ',';
    out << label_column << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.features(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        out << ds.class_names()[ds.label(i)] << '\n';
    }
}

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto images = read_bytes(images_path);
    const auto labels = read_bytes(labels_path);

    if (read_be32(images, 0, images_path) != 0x00000803U)
        throw Error(ErrorKind::Format, images_path.string() + ": bad magic number for IDX images");
    if (read_be32(labels, 0, labels_path) != 0x00000801U)
        throw Error(ErrorKind::Format, labels_path.string() + ": bad magic number for IDX labels");

    const std::size_t count = read_be32(images, 4, images_path);
    const std::size_t rows = read_be32(images, 8, images_path);
    const std::size_t cols = read_be32(images, 12, images_path);
    const std::size_t label_count = read_be32(labels, 4, labels_path);
    if (count != label_count) {
        throw Error(ErrorKind::Format, "IDX count mismatch: " + std::to_string(count) + " images vs " +
                                           std::to_string(label_count) + " labels");
    }
    const std::size_t dim = rows * cols;
    if (images.size() != 16 + count * dim) throw Error(ErrorKind::Format, images_path.string() + ": truncated or oversized");
    if (labels.size() != 8 + count) throw Error(ErrorKind::Format, labels_path.string() + ": truncated or oversized");

    std::vector<double> features(count * dim);
    for (std::size_t i = 0; i < features.size(); ++i) features[i] = images[16 + i] / 255.0;
    std::vector<std::string> raw(count);
    for (std::size_t i = 0; i < count; ++i) raw[i] = std::to_string(labels[8 + i]);

    auto [ids, vocab] = densify_labels(raw);
    if (vocab.size() < 2) throw Error(ErrorKind::Format, labels_path.string() + ": need at least 2 distinct labels");
    return {dim, vocab.size(), std::move(features), std::move(ids), std::move(vocab)};
}

std::vector<std::vector<double>> blob_means(const BlobSpec& spec) {
    const std::size_t M = spec.num_classes;
    const std::size_t d = spec.feature_dim;
    const double sigma = spec.class_stddev;
    if (M < 2) throw Error(ErrorKind::InvalidArgument, "blobs need at least 2 classes");
    if (d == 0) throw Error(ErrorKind::InvalidArgument, "mean placement unsatisfiable: feature_dim must be >= 1");
    if (spec.per_class_count < 1) throw Error(ErrorKind::InvalidArgument, "per_class_count must be >= 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::InvalidArgument, "class_stddev must be > 0");

    std::vector<std::vector<bool>> overlaps(M, std::vector<bool>(M, false));
    for (auto [a, b] : spec.overlap_pairs) {
        if (a >= M || b >= M || a == b) throw Error(ErrorKind::InvalidArgument, "invalid overlap pair");
        overlaps[a][b] = overlaps[b][a] = true;
    }

    if (!spec.class_means.empty()) {
        if (spec.class_means.size() != M) throw Error(ErrorKind::InvalidArgument, "class_means needs one mean per class");
        for (const auto& mu : spec.class_means) {
            if (mu.size() != d) throw Error(ErrorKind::DimensionMismatch, "class mean dimension != feature_dim");
        }
        for (std::size_t a = 0; a < M; ++a) {
            for (std::size_t b = a + 1; b < M; ++b) {
                const double dist = std::sqrt(squared_distance(spec.class_means[a], spec.class_means[b]));
                const bool ok = overlaps[a][b] ? dist <= sigma : dist >= 6.0 * sigma;
                if (!ok) {
                    throw Error(ErrorKind::InvalidArgument,
                                "mean placement unsatisfiable: classes " + std::to_string(a) + " and " +
                                    std::to_string(b) + " violate the separation constraint");
                }
            }
        }
        return spec.class_means;
    }

    // Group classes connected by overlap pairs; each group must be a clique,
    // otherwise two unlisted classes would end up within a stddev.
    std::vector<std::size_t> group_of(M);
    std::iota(group_of.begin(), group_of.end(), 0);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t a = 0; a < M; ++a) {
            for (std::size_t b = 0; b < M; ++b) {
                if (overlaps[a][b] && group_of[b] > group_of[a]) {
                    group_of[b] = group_of[a];
                    changed = true;
                }
            }
        }
    }
    std::vector<std::vector<std::size_t>> groups;
    std::map<std::size_t, std::size_t> group_index;
    for (std::size_t m = 0; m < M; ++m) {
        auto [it, inserted] = group_index.emplace(group_of[m], groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(m);
    }
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (std::size_t j = i + 1; j < g.size(); ++j) {
                if (!overlaps[g[i]][g[j]]) {
                    throw Error(ErrorKind::InvalidArgument,
                                "mean placement unsatisfiable: overlap pairs chain classes " + std::to_string(g[i]) +
                                    " and " + std::to_string(g[j]) + " without listing them as a pair");
                }
            }
        }
    }

    // Group anchors on an axis-aligned grid with spacing 8 sigma; members
    // spread over a segment of length 0.9 sigma along axis 0, which keeps
    // them within sigma after rounding. Cross-group distances stay >= 7 sigma.
    const std::size_t G = groups.size();
    std::size_t per_axis = 1;
    while (true) {
        std::size_t capacity = 1;
        for (std::size_t k = 0; k < d && capacity < G; ++k) capacity *= per_axis;
        if (capacity >= G) break;
        ++per_axis;
    }
    const double spacing = 8.0 * sigma;
    std::vector<std::vector<double>> anchors(G, std::vector<double>(d, 0.0));
    for (std::size_t g = 0; g < G; ++g) {
        std::size_t code = g;
        for (std::size_t k = 0; k < d; ++k) {
            anchors[g][k] = spacing * static_cast<double>(code % per_axis);
            code /= per_axis;
        }
    }
    std::vector<double> centroid(d, 0.0);
    for (const auto& a : anchors)
        for (std::size_t k = 0; k < d; ++k) centroid[k] += a[k] / static_cast<double>(G);

    std::vector<std::vector<double>> means(M, std::vector<double>(d, 0.0));
    for (std::size_t g = 0; g < G; ++g) {
        const auto& members = groups[g];
        for (std::size_t j = 0; j < members.size(); ++j) {
            auto& mu = means[members[j]];
            for (std::size_t k = 0; k < d; ++k) mu[k] = anchors[g][k] - centroid[k];
            if (members.size() > 1) {
                mu[0] += 0.9 * sigma * (static_cast<double>(j) / static_cast<double>(members.size() - 1) - 0.5);
            }
        }
    }
    return means;
}

LabeledDataset generate_blobs(const BlobSpec& spec) {
    const auto means = blob_means(spec);
    const std::size_t M = spec.num_classes;
    const std::size_t d = spec.feature_dim;
    Rng rng(spec.seed);
    std::vector<double> features;
    std::vector<std::size_t> labels;
    features.reserve(M * spec.per_class_count * d);
    labels.reserve(M * spec.per_class_count);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t i = 0; i < spec.per_class_count; ++i) {
            for (std::size_t k = 0; k < d; ++k) features.push_back(means[m][k] + spec.class_stddev * rng.normal());
            labels.push_back(m);
        }
    }
    return {d, M, std::move(features), std::move(labels)};
}

ClassPartition partition_by_class(const LabeledDataset& ds) {
    ClassPartition p;
    p.per_class.resize(ds.num_classes());
    for (std::size_t i = 0; i < ds.size(); ++i) p.per_class[ds.label(i)].push_back(i);
    return p;
}

void standardize(TrainTestSplit& split) {
    const std::size_t d = split.train.feature_dim();
    if (split.test.feature_dim() != d) throw Error(ErrorKind::DimensionMismatch, "train and test feature sizes differ");
    const auto n = static_cast<double>(split.train.size());
    std::vector<double> mean(d, 0.0), scale(d, 0.0);
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const auto x = split.train.features(i);
        for (std::size_t k = 0; k < d; ++k) mean[k] += x[k] / n;
    }
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const auto x = split.train.features(i);
        for (std::size_t k = 0; k < d; ++k) scale[k] += (x[k] - mean[k]) * (x[k] - mean[k]) / n;
    }
    for (double& s : scale) s = s > 0.0 ? 1.0 / std::sqrt(s) : 1.0;

    auto apply = [&](const LabeledDataset& ds) {
        auto f = ds.feature_buffer();
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = (f[i] - mean[i % d]) * scale[i % d];
        return LabeledDataset(d, ds.num_classes(), std::move(f), ds.labels(), ds.class_names());
    };
    split.train = apply(split.train);
    split.test = apply(split.test);
}

TrainTestSplit split_train_test(const LabeledDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorKind::InvalidArgument, "test_fraction must lie in (0, 1)");
    const auto partition = partition_by_class(ds);
    Rng rng(seed);
    std::vector<bool> is_test(ds.size(), false);
    for (std::size_t m = 0; m < partition.num_classes(); ++m) {
        auto members = partition.per_class[m];
        if (members.size() < 2) {
            throw Error(ErrorKind::InvalidArgument, "class " + ds.class_names()[m] + " has " +
                                                        std::to_string(members.size()) +
                                                        " samples; too small to stratify");
        }
        rng.shuffle(std::span(members));
        const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * test_fraction));
        for (std::size_t i = 0; i < n_test; ++i) is_test[members[i]] = true;
    }
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < ds.size(); ++i) (is_test[i] ? test_idx : train_idx).push_back(i);
    return {ds.subset(train_idx), ds.subset(test_idx)};
}

}  // namespace cel
