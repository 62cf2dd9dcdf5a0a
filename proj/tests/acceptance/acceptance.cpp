// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cel/confusion.hpp"
#include "cel/error.hpp"
#include "cel/harness.hpp"
#include "cel/model.hpp"
#include "cel/scheduler.hpp"
#include "cel/trainer.hpp"
#include "oracles.hpp"

using namespace cel;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct RandomInstance {
    std::size_t M = 0;
    std::vector<std::vector<double>> emb;
    std::vector<std::vector<double>> probs;
    std::vector<std::size_t> labels;

    EmbeddingBatch batch() const {
        EmbeddingBatch b;
        b.num_classes = M;
        b.embedding_dim = emb.front().size();
        b.labels = labels;
        for (const auto& g : emb) b.embeddings.insert(b.embeddings.end(), g.begin(), g.end());
        for (const auto& p : probs) b.probabilities.insert(b.probabilities.end(), p.begin(), p.end());
        return b;
    }
};

// Every class gets 1..max_per_class samples. Some embeddings repeat and some
// probability rows are one-hot so that the edge cases are exercised.
RandomInstance random_instance(Rng& rng, std::size_t max_classes, std::size_t max_per_class, std::size_t max_dim,
                               bool degenerate = true) {
    RandomInstance inst;
    inst.M = 2 + rng.below(max_classes - 1);
    const std::size_t e = 1 + rng.below(max_dim);
    const double spread = degenerate ? std::pow(10.0, rng.uniform(-3.0, 3.0)) : std::pow(10.0, rng.uniform(-1.0, 1.0));
    for (std::size_t m = 0; m < inst.M; ++m) {
        const std::size_t n = 1 + rng.below(max_per_class);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> g(e);
            if (degenerate && !inst.emb.empty() && rng.below(10) == 0) {
                g = inst.emb[rng.below(inst.emb.size())];
            } else {
                for (double& v : g) v = spread * rng.normal();
            }
            inst.emb.push_back(g);
            std::vector<double> p(inst.M, 0.0);
            if (rng.below(8) == 0) {
                p[rng.below(inst.M)] = 1.0;
            } else {
                std::vector<double> z(inst.M);
                for (double& v : z) v = 4.0 * rng.normal();
                p = softmax(z);
            }
            inst.probs.push_back(p);
            inst.labels.push_back(m);
        }
    }
    // Interleave classes so that nothing relies on class-major order.
    std::vector<std::size_t> perm(inst.labels.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span(perm));
    RandomInstance shuffled{inst.M, {}, {}, {}};
    for (auto i : perm) {
        shuffled.emb.push_back(inst.emb[i]);
        shuffled.probs.push_back(inst.probs[i]);
        shuffled.labels.push_back(inst.labels[i]);
    }
    return shuffled;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// The 8-class blob benchmark: classes 0 and 1 overlap, all others are at
// least 6 stddev apart.
ExperimentConfig blob_benchmark() {
    ExperimentConfig c;
    c.data.source = DataSource::Blobs;
    c.data.blobs.num_classes = 8;
    c.data.blobs.per_class_count = 250;
    c.data.blobs.feature_dim = 4;
    c.data.blobs.class_stddev = 1.0;
    c.data.blobs.overlap_pairs = {{0, 1}};
    c.data.blobs.seed = 0;
    c.data.test_fraction = 0.2;
    c.order = OrderMode::Distance;
    c.num_stages = 4;
    c.lambda = 4.0;
    c.epochs = 16;
    c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    return c;
}

Outcome oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = random_instance(rng, 5, 10, 3);
        const auto b = inst.batch();
        const auto dist = score_distance(b, class_centers(b));
        const auto ent = score_entropy(b);
        const auto od = cel::testing::brute_force_distance_scores(inst.emb, inst.labels, inst.M, kDistanceEpsilon);
        const auto oe = cel::testing::brute_force_entropy_scores(inst.probs, inst.labels, inst.M);
        for (std::size_t m = 0; m < inst.M; ++m) {
            // Relative for the huge clamped scores, absolute otherwise.
            worst = std::max(worst, std::abs(dist.scores[m] - od[m]) / std::max(1.0, std::abs(od[m])));
            worst = std::max(worst, std::abs(ent.scores[m] - oe[m]));
        }
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-9 && t < 5.0, fmt("200 instances, max deviation %.3g, %.2f s", worst, t)};
}

Outcome score_bounds() {
    Rng rng(2002);
    double min_dist = INFINITY, worst_entropy_excess = -INFINITY, min_entropy = INFINITY;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto inst = random_instance(rng, 10, 20, 8);
        const auto b = inst.batch();
        for (double s : score_distance(b, class_centers(b)).scores) min_dist = std::min(min_dist, s);
        for (double s : score_entropy(b).scores) {
            min_entropy = std::min(min_entropy, s);
            worst_entropy_excess = std::max(worst_entropy_excess, s - std::log(static_cast<double>(inst.M)));
        }
    }
    const bool pass = min_dist >= 1.0 - 1e-12 && min_entropy >= 0.0 && worst_entropy_excess <= 1e-12;
    return {pass, fmt("1000 batches, min S_dist %.15g, min S_entropy %.3g, max S_entropy - ln M %.3g", min_dist,
                      min_entropy, worst_entropy_excess)};
}

// Smallest squared distance from a sample to a center of another class.
double min_foreign_distance(const EmbeddingBatch& b) {
    const auto stats = class_centers(b);
    double best = INFINITY;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto g = b.embedding(i);
        for (std::size_t j = 0; j < b.num_classes; ++j) {
            if (j == b.labels[i]) continue;
            double d = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) d += (g[k] - stats.centers[j][k]) * (g[k] - stats.centers[j][k]);
            best = std::min(best, d);
        }
    }
    return best;
}

Outcome ordering_invariance() {
    Rng rng(3003);
    int unchanged = 0, clamped = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = random_instance(rng, 8, 15, 5, false);
        auto b = inst.batch();
        const auto before = score_distance(b, class_centers(b));
        const double c = std::pow(10.0, rng.uniform(-2.0, 2.0));
        const bool clamp_before = min_foreign_distance(b) < kDistanceEpsilon;
        for (double& v : b.embeddings) v *= c;
        const auto after = score_distance(b, class_centers(b));
        if (order_classes(before).order == order_classes(after).order) ++unchanged;
        // The clamp is an absolute floor and so not scale invariant.
        if (clamp_before || min_foreign_distance(b) < kDistanceEpsilon) {
            ++clamped;
            continue;
        }
        for (std::size_t m = 0; m < inst.M; ++m)
            worst = std::max(worst, std::abs(after.scores[m] - before.scores[m]) / before.scores[m]);
    }
    return {unchanged == 100 && worst <= 1e-9,
            fmt("%d/100 orderings unchanged; max relative score change %.3g (%d instances hit the distance floor)",
                unchanged, worst, clamped)};
}

Outcome cost_exactness() {
    double worst = 0.0;
    int cases = 0;
    const std::size_t E = 10;  // divisible by every lambda below
    for (std::size_t K = 1; K <= 10; ++K) {
        const std::size_t M = 2 * K;
        std::vector<std::size_t> labels;
        for (std::size_t m = 0; m < M; ++m)
            for (int i = 0; i < 7; ++i) labels.push_back(m);
        LabeledDataset ds(1, M, std::vector<double>(labels.size(), 0.0), labels);
        const auto partition = partition_by_class(ds);
        for (double lambda : {1.0, 2.0, 5.0, 10.0}) {
            const auto equal = build_schedule(natural_ordering(M), K, E, lambda, std::vector<std::size_t>(K, E));
            const auto reduced = build_schedule(natural_ordering(M), K, E, lambda);
            const double equal_expected = (static_cast<double>(K) + 1.0) / 2.0;
            const double reduced_expected = (static_cast<double>(K) - 1.0) / (2.0 * lambda) + 1.0;
            worst = std::max(worst, std::abs(measured_cost(equal, partition) - equal_expected));
            worst = std::max(worst, std::abs(measured_cost(reduced, partition) - reduced_expected));
            const auto predicted = predicted_cost(K, lambda);
            worst = std::max(worst, std::abs(predicted.equal_epoch_cost - equal_expected));
            worst = std::max(worst, std::abs(predicted.reduced_cost - reduced_expected));
            cases += 2;
        }
    }
    const auto five = predicted_cost(5, 5.0);
    const bool headline = std::abs(five.equal_epoch_cost - 3.0) <= 1e-9 && std::abs(five.reduced_cost - 1.4) <= 1e-9;
    return {worst <= 1e-9 && headline,
            fmt("%d schedules, max deviation %.3g; K=5: %.6g (equal), %.6g (K=lambda=5)", cases, worst,
                five.equal_epoch_cost, five.reduced_cost)};
}

Outcome gradient_correctness() {
    Rng rng(5005);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 1 + rng.below(5);
        const std::size_t M = 2 + rng.below(4);
        std::vector<std::size_t> dims{d};
        const std::size_t hidden_layers = rng.below(3);
        for (std::size_t h = 0; h < hidden_layers; ++h) dims.push_back(1 + rng.below(6));
        dims.push_back(M);
        // Nonzero biases: with zero biases a dead unit feeds an exact zero
        // into the next layer, which puts that unit on the ReLU kink where
        // central differences measure half a slope.
        auto model = DenseModel::glorot(dims, rng);
        for (std::size_t l = 0; l + 1 < dims.size(); ++l)
            for (double& b : model.biases(l)) b = rng.uniform(-0.5, 0.5);
        const std::size_t n = 1 + rng.below(8);
        std::vector<double> features(n * d);
        for (double& v : features) v = rng.normal();
        std::vector<std::size_t> labels(n);
        for (auto& l : labels) l = rng.below(M);
        LabeledDataset ds(d, M, features, labels);
        std::vector<std::size_t> batch(n);
        std::iota(batch.begin(), batch.end(), std::size_t{0});
        worst = std::max(worst, grad_check(model, ds, batch));
    }
    return {worst <= 1e-4, fmt("50 models, max relative error %.3g", worst)};
}

Outcome warm_start_and_determinism() {
    auto c = blob_benchmark();
    c.data.blobs.per_class_count = 60;
    c.seeds = {0, 1};
    const auto root = cel::testing::temp_path("acceptance_determinism");
    c.output_dir = root / "first";
    run_cel(c);
    c.output_dir = root / "second";
    run_cel(c);
    const auto first = slurp(root / "first" / "report.json");
    const bool same_report = !first.empty() && first == slurp(root / "second" / "report.json");

    // Each stage must start from the previous checkpoint exactly: replaying
    // stage k from the stored stage k-1 checkpoint reproduces stage k, and a
    // zero learning rate leaves that checkpoint untouched.
    const auto data = prepare_data(c.data);
    const auto partition = partition_by_class(data.train);
    const auto report = load_report(root / "first" / "report.json");
    int chained = 0, checked = 0;
    for (const auto& run : report.runs) {
        const auto schedule = build_schedule(run.ordering, c.num_stages, c.epochs, c.lambda);
        const auto dir = root / "first" / ("seed_" + std::to_string(run.seed));
        for (std::size_t k = 2; k <= c.num_stages; ++k) {
            const auto prev = load_checkpoint(dir / ("stage_" + std::to_string(k - 1) + ".ckpt.json"));
            const auto next = load_checkpoint(dir / ("stage_" + std::to_string(k) + ".ckpt.json"));
            TrainConfig tc = c.model.train;
            tc.epochs = schedule.stage_epochs[k - 1];
            tc.seed = run.seed;
            const auto pool = pool_at_stage(schedule, k, partition);
            const auto replay = train_stage(prev, pool, data.train, tc, &data.test);
            tc.initial_lr = 0.0;
            const auto frozen = train_stage(prev, pool, data.train, tc);
            ++checked;
            if (replay.checkpoint == next && frozen.checkpoint.model == prev.model) ++chained;
        }
    }
    return {same_report && chained == checked,
            fmt("report.json %s across runs; %d/%d stage transitions start from the stored checkpoint",
                same_report ? "identical" : "DIFFERS", chained, checked)};
}

Outcome degenerate_equivalence() {
    auto c = blob_benchmark();
    c.data.blobs.per_class_count = 60;
    c.num_stages = 1;
    c.seeds = {0, 1, 2};
    const auto cel_report = run_cel(c);
    const auto normal_report = run_normal(c);
    bool same_params = true;
    for (std::size_t i = 0; i < c.seeds.size(); ++i)
        same_params = same_params && cel_report.runs[i].final_checkpoint == normal_report.runs[i].final_checkpoint;
    const bool same_results = results_to_json(cel_report) == results_to_json(normal_report);
    return {same_params && same_results, fmt("3 seeds: results %s, final parameters %s",
                                             same_results ? "identical" : "DIFFER", same_params ? "identical" : "DIFFER")};
}

Outcome confusing_class_detection() {
    const auto t0 = std::chrono::steady_clock::now();
    auto c = blob_benchmark();
    const auto data = prepare_data(c.data);
    int hits = 0;
    std::string firsts;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ordering = compute_ordering(c, data.train, seed);
        const std::size_t a = std::min(ordering.order[0], ordering.order[1]);
        const std::size_t b = std::max(ordering.order[0], ordering.order[1]);
        if (a == 0 && b == 1) ++hits;
        firsts += fmt(" (%zu,%zu)", ordering.order[0], ordering.order[1]);
    }
    const double t = seconds_since(t0);
    return {hits >= 4 && t < 120.0, fmt("%d/5 seeds rank classes 0,1 first;%s; %.1f s", hits, firsts.c_str(), t)};
}

Outcome directional_effect() {
    const auto t0 = std::chrono::steady_clock::now();
    auto c = blob_benchmark();
    const auto cel_report = run_cel(c);
    // Normal training gets the same measured cost: sum_k epochs_k |pool_k| / |D| epochs.
    const double cost = cel_report.aggregate.mean_measured_cost;
    c.normal_epochs = static_cast<std::size_t>(std::llround(cost * static_cast<double>(c.epochs)));
    const auto normal_report = run_normal(c);
    const double normal_cost = normal_report.aggregate.mean_measured_cost;

    const auto& a = cel_report.aggregate.mean_per_class_error;
    const auto& b = normal_report.aggregate.mean_per_class_error;
    const double cel_pair = (a[0] + a[1]) / 2.0;
    const double normal_pair = (b[0] + b[1]) / 2.0;
    const double improvement = normal_pair - cel_pair;
    const double t = seconds_since(t0);
    const bool equal_cost = std::abs(cost - normal_cost) <= 1e-12;
    const bool pass = equal_cost && cel_pair <= normal_pair + 0.005 && improvement >= 0.0 && t < 600.0;
    return {pass, fmt("cost %.4f vs %.4f; overlapping-pair error CEL %.2f%% vs normal %.2f%% (improvement %+.2f pp; "
                      "overall %.2f%% vs %.2f%%), %.1f s",
                      cost, normal_cost, 100.0 * cel_pair, 100.0 * normal_pair, 100.0 * improvement,
                      100.0 * cel_report.aggregate.mean_error, 100.0 * normal_report.aggregate.mean_error, t)};
}

Outcome exclusion_integrity() {
    Rng rng(1010);
    auto c = blob_benchmark();
    c.data.blobs.per_class_count = 40;
    const auto data = prepare_data(c.data);
    const auto partition = partition_by_class(data.train);
    const std::size_t M = data.train.num_classes();
    int identical = 0, trials = 0;
    for (int trial = 0; trial < 12; ++trial) {
        auto ordering = natural_ordering(M);
        rng.shuffle(std::span(ordering.order));
        const auto schedule = build_schedule(ordering, 4, 4, 2.0);
        Checkpoint ckpt = initial_checkpoint({data.train.feature_dim(), 16, M}, trial);
        TrainConfig tc;
        tc.batch_size = 32;
        tc.seed = trial;
        for (std::size_t k = 1; k < schedule.num_stages; ++k) {
            const auto pool = pool_at_stage(schedule, k, partition);
            std::vector<bool> in_pool(data.train.size(), false);
            for (auto i : pool) in_pool[i] = true;
            auto features = data.train.feature_buffer();
            const std::size_t d = data.train.feature_dim();
            for (std::size_t i = 0; i < data.train.size(); ++i)
                if (!in_pool[i])
                    for (std::size_t j = 0; j < d; ++j) features[i * d + j] = 1e3 * rng.normal();
            LabeledDataset perturbed(d, M, features, data.train.labels());
            tc.epochs = schedule.stage_epochs[k - 1];
            const auto clean = train_stage(ckpt, pool, data.train, tc);
            const auto dirty = train_stage(ckpt, pool, perturbed, tc);
            ++trials;
            if (clean.checkpoint == dirty.checkpoint) ++identical;
            ckpt = clean.checkpoint;
        }
    }
    return {identical == trials, fmt("%d/%d stage updates bit-identical under out-of-pool perturbation", identical, trials)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"confusion-score oracle equivalence", oracle_equivalence},
        {"score bounds", score_bounds},
        {"ordering invariance under embedding scaling", ordering_invariance},
        {"cost-model exactness", cost_exactness},
        {"gradient correctness", gradient_correctness},
        {"warm start and determinism", warm_start_and_determinism},
        {"one-stage CEL equals normal training", degenerate_equivalence},
        {"confusing-class detection", confusing_class_detection},
        {"directional CEL effect on the overlapping pair", directional_effect},
        {"exclusion integrity", exclusion_integrity},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
