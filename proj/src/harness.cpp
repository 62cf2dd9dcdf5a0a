#include "cel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cel/error.hpp"
#include "cel/rng.hpp"

namespace cel {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::Config, where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw Error(ErrorKind::Config, "unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

NetworkConfig parse_network(const json& j, const std::string& where, bool allow_epochs, NetworkConfig net,
                            std::optional<std::size_t>* epochs) {
    if (allow_epochs) {
        check_keys(j, {"hidden", "epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_drop_points",
                       "lr_drop_factor"},
                   where);
    } else {
        check_keys(j, {"hidden", "batch_size", "lr", "momentum", "weight_decay", "lr_drop_points", "lr_drop_factor"},
                   where);
    }
    read_opt(j, "hidden", net.hidden);
    read_opt(j, "batch_size", net.train.batch_size);
    read_opt(j, "lr", net.train.initial_lr);
    read_opt(j, "momentum", net.train.momentum);
    read_opt(j, "weight_decay", net.train.weight_decay);
    read_opt(j, "lr_drop_points", net.train.lr_drop_points);
    read_opt(j, "lr_drop_factor", net.train.lr_drop_factor);
    if (allow_epochs && j.contains("epochs")) *epochs = j.at("epochs").get<std::size_t>();
    return net;
}

BlobSpec parse_blobs(const json& j) {
    check_keys(j, {"num_classes", "per_class_count", "feature_dim", "class_means", "class_stddev", "overlap_pairs",
                   "seed"},
               "data.blobs");
    BlobSpec spec;
    read_opt(j, "num_classes", spec.num_classes);
    read_opt(j, "per_class_count", spec.per_class_count);
    read_opt(j, "feature_dim", spec.feature_dim);
    read_opt(j, "class_means", spec.class_means);
    read_opt(j, "class_stddev", spec.class_stddev);
    read_opt(j, "seed", spec.seed);
    if (j.contains("overlap_pairs")) {
        for (const auto& pair : j.at("overlap_pairs")) {
            if (!pair.is_array() || pair.size() != 2) throw Error(ErrorKind::Config, "overlap_pairs entries must be [a, b]");
            spec.overlap_pairs.emplace_back(pair[0].get<std::size_t>(), pair[1].get<std::size_t>());
        }
    }
    return spec;
}

std::vector<std::size_t> layer_dims(const NetworkConfig& net, std::size_t d, std::size_t M) {
    std::vector<std::size_t> dims{d};
    dims.insert(dims.end(), net.hidden.begin(), net.hidden.end());
    dims.push_back(M);
    return dims;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json metrics_json(const EpochMetrics& m) { return json::parse(metrics_to_json_line(m)); }

EpochMetrics metrics_from(const json& j) {
    EpochMetrics m;
    m.stage = j.at("stage").get<std::size_t>();
    m.epoch = j.at("epoch").get<std::size_t>();
    m.train_loss = j.at("train_loss").get<double>();
    m.val_loss = j.at("val_loss").get<double>();
    m.accuracy = j.at("accuracy").get<double>();
    m.per_class_error = j.at("per_class_error").get<std::vector<double>>();
    m.per_class_count = j.at("per_class_count").get<std::vector<std::size_t>>();
    return m;
}

json runs_json(const ExperimentReport& r) {
    json runs = json::array();
    for (const auto& run : r.runs) {
        json jr;
        jr["seed"] = run.seed;
        jr["final_test_error"] = run.final_test_error;
        jr["per_class_test_error"] = run.per_class_test_error;
        jr["measured_cost"] = run.measured_cost;
        json stages = json::array();
        for (const auto& st : run.stages) {
            json js;
            js["stage"] = st.stage;
            js["pool_classes"] = st.pool_classes;
            js["epochs"] = st.epochs;
            json ms = json::array();
            for (const auto& m : st.metrics) ms.push_back(metrics_json(m));
            js["metrics"] = ms;
            stages.push_back(js);
        }
        jr["stages"] = stages;
        runs.push_back(jr);
    }
    return runs;
}

json aggregate_json(const Aggregate& a) {
    json j;
    j["mean_error"] = a.mean_error;
    j["stddev_error"] = a.stddev_error;
    j["best_error"] = a.best_error;
    j["best_seed"] = a.best_seed;
    j["mean_per_class_error"] = a.mean_per_class_error;
    j["stddev_per_class_error"] = a.stddev_per_class_error;
    j["mean_measured_cost"] = a.mean_measured_cost;
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

std::filesystem::path seed_dir(const ExperimentConfig& config, std::uint64_t seed) {
    auto dir = config.output_dir / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(dir);
    return dir;
}

TrainConfig stage_config(const ExperimentConfig& config, std::size_t epochs, std::uint64_t seed) {
    TrainConfig tc = config.model.train;
    tc.epochs = epochs;
    tc.seed = seed;
    return tc;
}

// Runs the stages of `schedule` with warm starts and fills a SeedRun.
SeedRun run_schedule(const ExperimentConfig& config, const TrainTestSplit& data, const ExpansionSchedule& schedule,
                     std::uint64_t seed) {
    const auto partition = partition_by_class(data.train);
    SeedRun run;
    run.seed = seed;
    run.ordering = schedule.ordering;
    run.measured_cost = measured_cost(schedule, partition);

    const bool write = !config.output_dir.empty();
    std::filesystem::path dir;
    if (write) {
        dir = seed_dir(config, seed);
        write_text(dir / "ordering.csv", ordering_csv(schedule.ordering, data.train.class_names()));
        write_text(dir / "schedule.json", schedule_to_json(schedule, data.train.class_names()) + "\n");
    }

    Checkpoint ckpt = initial_checkpoint(
        layer_dims(config.model, data.train.feature_dim(), data.train.num_classes()), seed);
    for (std::size_t k = 1; k <= schedule.num_stages; ++k) {
        const auto pool = pool_at_stage(schedule, k, partition);
        auto result = train_stage(ckpt, pool, data.train, stage_config(config, schedule.stage_epochs[k - 1], seed),
                                  &data.test);
        StageRecord rec;
        rec.stage = k;
        rec.pool_classes = schedule.classes_in_pool(k);
        std::sort(rec.pool_classes.begin(), rec.pool_classes.end());
        rec.epochs = schedule.stage_epochs[k - 1];
        rec.metrics = std::move(result.metrics);
        if (write) {
            write_metrics_jsonl(rec.metrics, dir / ("stage_" + std::to_string(k) + ".metrics.jsonl"));
            save_checkpoint(result.checkpoint, dir / ("stage_" + std::to_string(k) + ".ckpt.json"));
        }
        run.stages.push_back(std::move(rec));
        ckpt = std::move(result.checkpoint);
    }

    const auto final_metrics = evaluate(ckpt.model, data.test);
    run.final_test_error = final_metrics.overall_error();
    run.per_class_test_error = final_metrics.per_class_error;
    run.final_checkpoint = std::move(ckpt);
    return run;
}

template <typename Fn>
ExperimentReport run_all(const ExperimentConfig& config, const std::string& mode, Fn&& per_seed) {
    config.validate();
    const auto data = prepare_data(config.data);
    if (!config.output_dir.empty()) std::filesystem::create_directories(config.output_dir);

    ExperimentReport report;
    report.mode = mode;
    report.class_names = data.train.class_names();
    report.test_fingerprint = data.test.fingerprint();
    report.test_class_counts.assign(data.test.num_classes(), 0);
    for (auto l : data.test.labels()) ++report.test_class_counts[l];

    // Seeds share nothing mutable; each writes to its own directory.
    const std::size_t width = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < config.seeds.size(); start += width) {
        std::vector<std::future<SeedRun>> futures;
        const std::size_t end = std::min(config.seeds.size(), start + width);
        for (std::size_t i = start; i < end; ++i) {
            futures.push_back(std::async(std::launch::async, [&, seed = config.seeds[i]] { return per_seed(data, seed); }));
        }
        for (auto& f : futures) report.runs.push_back(f.get());
    }
    report.aggregate = aggregate_runs(report.runs);
    return report;
}

}  // namespace

const char* to_string(OrderMode mode) {
    switch (mode) {
        case OrderMode::Distance: return "distance";
        case OrderMode::Entropy: return "entropy";
        case OrderMode::Natural: return "natural";
        case OrderMode::Random: return "random";
    }
    return "unknown";
}

OrderMode order_mode_from_string(const std::string& name) {
    if (name == "distance") return OrderMode::Distance;
    if (name == "entropy") return OrderMode::Entropy;
    if (name == "natural") return OrderMode::Natural;
    if (name == "random") return OrderMode::Random;
    throw Error(ErrorKind::Config, "unknown order mode '" + name + "' (distance|entropy|natural|random)");
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw Error(ErrorKind::Config, "seeds must not be empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw Error(ErrorKind::Config, "seeds must be distinct");
    if (num_stages < 1) throw Error(ErrorKind::Config, "stages must be >= 1");
    if (epochs < 1) throw Error(ErrorKind::Config, "epochs must be >= 1");
    if (!(lambda >= 1.0)) throw Error(ErrorKind::Config, "lambda must be >= 1");
    if (normal_epochs && *normal_epochs < 1) throw Error(ErrorKind::Config, "normal_epochs must be >= 1");
    if (scorer_epochs && *scorer_epochs < 1) throw Error(ErrorKind::Config, "scorer epochs must be >= 1");
    if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0))
        throw Error(ErrorKind::Config, "test_fraction must lie in (0, 1)");
    auto probe = model.train;
    probe.epochs = 1;
    probe.validate();
    probe = scorer.train;
    probe.epochs = 1;
    probe.validate();
    if (data.source == DataSource::Csv && !std::filesystem::exists(data.csv_path))
        throw Error(ErrorKind::Io, "data file not found: " + data.csv_path.string());
    if (data.source == DataSource::Idx &&
        (!std::filesystem::exists(data.idx_images) || !std::filesystem::exists(data.idx_labels)))
        throw Error(ErrorKind::Io, "IDX data files not found");
}

std::size_t ExperimentConfig::resolved_scorer_epochs() const {
    if (scorer_epochs) return *scorer_epochs;
    return static_cast<std::size_t>(std::max(1.0, std::round(static_cast<double>(epochs) / lambda)));
}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    try {
        const json j = json::parse(json_text);
        check_keys(j, {"data", "scorer", "model", "order", "stages", "epochs", "lambda", "stage_epochs",
                       "normal_epochs", "seeds", "output_dir"},
                   "config");
        if (!j.contains("data")) throw Error(ErrorKind::Config, "config needs a 'data' section");

        const json& d = j.at("data");
        check_keys(d, {"source", "blobs", "csv", "idx", "test_fraction", "split_seed", "standardize"}, "data");
        const std::string source = d.value("source", std::string("blobs"));
        if (source == "blobs") {
            c.data.source = DataSource::Blobs;
            c.data.blobs = parse_blobs(d.value("blobs", json::object()));
        } else if (source == "csv") {
            c.data.source = DataSource::Csv;
            const json& cj = d.at("csv");
            check_keys(cj, {"path", "label_column"}, "data.csv");
            c.data.csv_path = resolve(base_dir, cj.at("path").get<std::string>());
            read_opt(cj, "label_column", c.data.label_column);
        } else if (source == "idx") {
            c.data.source = DataSource::Idx;
            const json& ij = d.at("idx");
            check_keys(ij, {"images", "labels"}, "data.idx");
            c.data.idx_images = resolve(base_dir, ij.at("images").get<std::string>());
            c.data.idx_labels = resolve(base_dir, ij.at("labels").get<std::string>());
        } else {
            throw Error(ErrorKind::Config, "unknown data source '" + source + "' (blobs|csv|idx)");
        }
        read_opt(d, "test_fraction", c.data.test_fraction);
        read_opt(d, "split_seed", c.data.split_seed);
        read_opt(d, "standardize", c.data.standardize);

        if (j.contains("scorer")) c.scorer = parse_network(j.at("scorer"), "scorer", true, c.scorer, &c.scorer_epochs);
        if (j.contains("model")) c.model = parse_network(j.at("model"), "model", false, c.model, nullptr);
        if (j.contains("order")) c.order = order_mode_from_string(j.at("order").get<std::string>());
        read_opt(j, "stages", c.num_stages);
        read_opt(j, "epochs", c.epochs);
        read_opt(j, "lambda", c.lambda);
        if (j.contains("stage_epochs")) c.stage_epochs = j.at("stage_epochs").get<std::vector<std::size_t>>();
        if (j.contains("normal_epochs")) c.normal_epochs = j.at("normal_epochs").get<std::size_t>();
        read_opt(j, "seeds", c.seeds);
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("invalid config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.parent_path());
}

TrainTestSplit prepare_data(const DataConfig& config) {
    LabeledDataset all;
    switch (config.source) {
        case DataSource::Blobs: all = generate_blobs(config.blobs); break;
        case DataSource::Csv: all = load_csv(config.csv_path, config.label_column); break;
        case DataSource::Idx: all = load_idx(config.idx_images, config.idx_labels); break;
    }
    auto split = split_train_test(all, config.test_fraction, config.split_seed);
    if (config.standardize) standardize(split);
    return split;
}

DenseModel train_scorer(const ExperimentConfig& config, const LabeledDataset& train, std::uint64_t seed) {
    TrainConfig tc = config.scorer.train;
    tc.epochs = config.resolved_scorer_epochs();
    tc.seed = seed;
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto result = train_stage(layer_dims(config.scorer, train.feature_dim(), train.num_classes()), all, train, tc);
    return std::move(result.checkpoint.model);
}

ClassOrdering compute_ordering(const ExperimentConfig& config, const LabeledDataset& train, std::uint64_t seed) {
    const std::size_t M = train.num_classes();
    switch (config.order) {
        case OrderMode::Natural: return natural_ordering(M);
        case OrderMode::Random: {
            auto ordering = natural_ordering(M);
            Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
            rng.shuffle(std::span(ordering.order));
            return ordering;
        }
        case OrderMode::Distance:
        case OrderMode::Entropy: break;
    }
    const auto scorer = train_scorer(config, train, seed);
    const auto batch = compute_embeddings(scorer, train);
    const auto report = config.order == OrderMode::Distance
                            ? score_distance(batch, class_centers(batch, partition_by_class(train)))
                            : score_entropy(batch);
    return order_classes(report);
}

SeedRun run_cel_seed(const ExperimentConfig& config, const TrainTestSplit& data, std::uint64_t seed) {
    const auto ordering = compute_ordering(config, data.train, seed);
    const auto schedule = build_schedule(ordering, config.num_stages, config.epochs, config.lambda, config.stage_epochs);
    return run_schedule(config, data, schedule, seed);
}

SeedRun run_normal_seed(const ExperimentConfig& config, const TrainTestSplit& data, std::uint64_t seed) {
    const std::size_t epochs = config.normal_epochs.value_or(config.epochs);
    const auto schedule = build_schedule(natural_ordering(data.train.num_classes()), 1, config.epochs, 1.0,
                                         std::vector<std::size_t>{epochs});
    return run_schedule(config, data, schedule, seed);
}

ExperimentReport run_cel(const ExperimentConfig& config) {
    auto report = run_all(config, "cel", [&](const TrainTestSplit& data, std::uint64_t seed) {
        return run_cel_seed(config, data, seed);
    });
    report.order = config.order;
    report.num_stages = config.num_stages;
    report.lambda = config.lambda;
    report.final_epochs = config.epochs;
    if (!config.output_dir.empty()) write_report(report, config.output_dir);
    return report;
}

ExperimentReport run_normal(const ExperimentConfig& config) {
    auto report = run_all(config, "normal", [&](const TrainTestSplit& data, std::uint64_t seed) {
        return run_normal_seed(config, data, seed);
    });
    report.order = OrderMode::Natural;
    report.num_stages = 1;
    report.lambda = 1.0;
    report.final_epochs = config.epochs;
    if (!config.output_dir.empty()) write_report(report, config.output_dir);
    return report;
}

Aggregate aggregate_runs(const std::vector<SeedRun>& runs) {
    Aggregate a;
    if (runs.empty()) return a;
    const auto n = static_cast<double>(runs.size());
    const std::size_t M = runs.front().per_class_test_error.size();
    a.mean_per_class_error.assign(M, 0.0);
    a.stddev_per_class_error.assign(M, 0.0);
    a.best_error = runs.front().final_test_error;
    a.best_seed = runs.front().seed;
    for (const auto& r : runs) {
        a.mean_error += r.final_test_error;
        a.mean_measured_cost += r.measured_cost;
        for (std::size_t c = 0; c < M; ++c) a.mean_per_class_error[c] += r.per_class_test_error[c];
        if (r.final_test_error < a.best_error) {
            a.best_error = r.final_test_error;
            a.best_seed = r.seed;
        }
    }
    a.mean_error /= n;
    a.mean_measured_cost /= n;
    for (double& v : a.mean_per_class_error) v /= n;
    if (runs.size() > 1) {
        double ss = 0.0;
        std::vector<double> ss_c(M, 0.0);
        for (const auto& r : runs) {
            ss += (r.final_test_error - a.mean_error) * (r.final_test_error - a.mean_error);
            for (std::size_t c = 0; c < M; ++c) {
                const double dv = r.per_class_test_error[c] - a.mean_per_class_error[c];
                ss_c[c] += dv * dv;
            }
        }
        a.stddev_error = std::sqrt(ss / (n - 1.0));
        for (std::size_t c = 0; c < M; ++c) a.stddev_per_class_error[c] = std::sqrt(ss_c[c] / (n - 1.0));
    }
    return a;
}

std::string report_to_json(const ExperimentReport& r) {
    json meta;
    meta["mode"] = r.mode;
    meta["order"] = to_string(r.order);
    meta["num_stages"] = r.num_stages;
    meta["lambda"] = r.lambda;
    meta["final_epochs"] = r.final_epochs;
    meta["class_names"] = r.class_names;
    meta["test_fingerprint"] = hex64(r.test_fingerprint);
    meta["test_class_counts"] = r.test_class_counts;
    json orderings = json::array();
    for (const auto& run : r.runs) {
        orderings.push_back({{"seed", run.seed},
                             {"order", run.ordering.order},
                             {"criterion", to_string(run.ordering.source.criterion)},
                             {"scores", run.ordering.source.scores}});
    }
    meta["orderings"] = orderings;
    json j;
    j["meta"] = meta;
    j["runs"] = runs_json(r);
    j["aggregate"] = aggregate_json(r.aggregate);
    return j.dump(2);
}

std::string results_to_json(const ExperimentReport& r) {
    json j;
    j["runs"] = runs_json(r);
    j["aggregate"] = aggregate_json(r.aggregate);
    return j.dump(2);
}

ExperimentReport report_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ExperimentReport r;
        const json& meta = j.at("meta");
        r.mode = meta.at("mode").get<std::string>();
        r.order = order_mode_from_string(meta.at("order").get<std::string>());
        r.num_stages = meta.at("num_stages").get<std::size_t>();
        r.lambda = meta.at("lambda").get<double>();
        r.final_epochs = meta.at("final_epochs").get<std::size_t>();
        r.class_names = meta.at("class_names").get<std::vector<std::string>>();
        r.test_fingerprint = std::stoull(meta.at("test_fingerprint").get<std::string>(), nullptr, 16);
        r.test_class_counts = meta.at("test_class_counts").get<std::vector<std::size_t>>();
        const auto& orderings = meta.at("orderings");
        const auto& runs = j.at("runs");
        if (orderings.size() != runs.size()) throw Error(ErrorKind::Format, "report orderings and runs differ in length");
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& jr = runs[i];
            SeedRun run;
            run.seed = jr.at("seed").get<std::uint64_t>();
            run.ordering.order = orderings[i].at("order").get<std::vector<std::size_t>>();
            run.ordering.source.criterion = criterion_from_string(orderings[i].at("criterion").get<std::string>());
            run.ordering.source.scores = orderings[i].at("scores").get<std::vector<double>>();
            run.final_test_error = jr.at("final_test_error").get<double>();
            run.per_class_test_error = jr.at("per_class_test_error").get<std::vector<double>>();
            run.measured_cost = jr.at("measured_cost").get<double>();
            for (const auto& js : jr.at("stages")) {
                StageRecord st;
                st.stage = js.at("stage").get<std::size_t>();
                st.pool_classes = js.at("pool_classes").get<std::vector<std::size_t>>();
                st.epochs = js.at("epochs").get<std::size_t>();
                for (const auto& m : js.at("metrics")) st.metrics.push_back(metrics_from(m));
                run.stages.push_back(std::move(st));
            }
            r.runs.push_back(std::move(run));
        }
        const json& ag = j.at("aggregate");
        r.aggregate.mean_error = ag.at("mean_error").get<double>();
        r.aggregate.stddev_error = ag.at("stddev_error").get<double>();
        r.aggregate.best_error = ag.at("best_error").get<double>();
        r.aggregate.best_seed = ag.at("best_seed").get<std::uint64_t>();
        r.aggregate.mean_per_class_error = ag.at("mean_per_class_error").get<std::vector<double>>();
        r.aggregate.stddev_per_class_error = ag.at("stddev_per_class_error").get<std::vector<double>>();
        r.aggregate.mean_measured_cost = ag.at("mean_measured_cost").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, std::string("malformed report: ") + e.what());
    }
}

ExperimentReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open report " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return report_from_json(buf.str());
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "report.json", report_to_json(report) + "\n");
}

Comparison compare(const ExperimentReport& a, const ExperimentReport& b) {
    if (a.class_names != b.class_names) throw Error(ErrorKind::InvalidArgument, "reports have different class vocabularies");
    if (a.test_fingerprint != b.test_fingerprint)
        throw Error(ErrorKind::InvalidArgument, "reports were evaluated on different test sets");
    if (a.runs.empty() || b.runs.empty()) throw Error(ErrorKind::InvalidArgument, "reports contain no runs");

    Comparison c;
    c.class_names = a.class_names;
    c.mean_error_a = a.aggregate.mean_error;
    c.mean_error_b = b.aggregate.mean_error;
    c.overall_delta = c.mean_error_b - c.mean_error_a;
    c.per_class_mean_a = a.aggregate.mean_per_class_error;
    c.per_class_mean_b = b.aggregate.mean_per_class_error;
    c.per_class_delta.resize(c.class_names.size());
    for (std::size_t m = 0; m < c.per_class_delta.size(); ++m) c.per_class_delta[m] = c.per_class_mean_b[m] - c.per_class_mean_a[m];
    if (!b.runs.front().stages.empty()) c.preferential_classes = b.runs.front().stages.front().pool_classes;

    for (const auto& rb : b.runs) {
        const auto it = std::find_if(a.runs.begin(), a.runs.end(), [&](const SeedRun& ra) { return ra.seed == rb.seed; });
        if (it == a.runs.end()) continue;
        SeedDelta d;
        d.seed = rb.seed;
        d.overall_delta = rb.final_test_error - it->final_test_error;
        d.per_class_delta.resize(c.class_names.size());
        for (std::size_t m = 0; m < d.per_class_delta.size(); ++m)
            d.per_class_delta[m] = rb.per_class_test_error[m] - it->per_class_test_error[m];
        c.per_seed.push_back(std::move(d));
    }
    return c;
}

std::string comparison_table(const Comparison& c) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %10s %10s %10s %s\n", "class", "A err(%)", "B err(%)", "delta(pp)", "");
    os << line;
    for (std::size_t m = 0; m < c.class_names.size(); ++m) {
        const bool first = std::find(c.preferential_classes.begin(), c.preferential_classes.end(), m) !=
                           c.preferential_classes.end();
        std::snprintf(line, sizeof line, "%-16s %10.2f %10.2f %+10.2f %s\n", c.class_names[m].c_str(),
                      100.0 * c.per_class_mean_a[m], 100.0 * c.per_class_mean_b[m], 100.0 * c.per_class_delta[m],
                      first ? "*" : "");
        os << line;
    }
    std::snprintf(line, sizeof line, "%-16s %10.2f %10.2f %+10.2f\n", "overall", 100.0 * c.mean_error_a,
                  100.0 * c.mean_error_b, 100.0 * c.overall_delta);
    os << line;
    for (const auto& d : c.per_seed) {
        std::snprintf(line, sizeof line, "seed %-11llu %+10.2f pp overall\n", static_cast<unsigned long long>(d.seed),
                      100.0 * d.overall_delta);
        os << line;
    }
    os << "* = classes in B's first-stage pool\n";
    return os.str();
}

std::string comparison_to_json(const Comparison& c) {
    json j;
    j["class_names"] = c.class_names;
    j["preferential_classes"] = c.preferential_classes;
    j["mean_error_a"] = c.mean_error_a;
    j["mean_error_b"] = c.mean_error_b;
    j["overall_delta"] = c.overall_delta;
    j["per_class_mean_a"] = c.per_class_mean_a;
    j["per_class_mean_b"] = c.per_class_mean_b;
    j["per_class_delta"] = c.per_class_delta;
    json seeds = json::array();
    for (const auto& d : c.per_seed)
        seeds.push_back({{"seed", d.seed}, {"overall_delta", d.overall_delta}, {"per_class_delta", d.per_class_delta}});
    j["per_seed"] = seeds;
    return j.dump(2);
}

std::string ordering_csv(const ClassOrdering& ordering, std::span<const std::string> class_names) {
    std::ostringstream os;
    os << "rank,class_id,class_name,score\n";
    char buf[32];
    for (std::size_t r = 0; r < ordering.order.size(); ++r) {
        const auto c = ordering.order[r];
        const double score = c < ordering.source.scores.size() ? ordering.source.scores[c] : 0.0;
        std::snprintf(buf, sizeof buf, "%.17g", score);
        os << r + 1 << ',' << c << ',' << (class_names.empty() ? std::to_string(c) : class_names[c]) << ',' << buf
           << '\n';
    }
    return os.str();
}

}  // namespace cel
