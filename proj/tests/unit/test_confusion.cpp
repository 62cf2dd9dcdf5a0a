#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "cel/confusion.hpp"
#include "cel/error.hpp"
#include "cel/model.hpp"
#include "cel/rng.hpp"
#include "oracles.hpp"

using namespace cel;

namespace {

EmbeddingBatch make_batch(const std::vector<std::vector<double>>& emb, const std::vector<std::size_t>& labels,
                          std::size_t M) {
    EmbeddingBatch b;
    b.num_classes = M;
    b.embedding_dim = emb.front().size();
    b.labels = labels;
    for (const auto& g : emb) b.embeddings.insert(b.embeddings.end(), g.begin(), g.end());
    return b;
}

void set_probabilities(EmbeddingBatch& b, const std::vector<std::vector<double>>& probs) {
    b.probabilities.clear();
    for (const auto& p : probs) b.probabilities.insert(b.probabilities.end(), p.begin(), p.end());
}

}  // namespace

TEST_CASE("identity single-layer scorer embeds the raw input") {
    DenseModel scorer({1, 2});
    auto W = scorer.weights(0);
    W[0] = 1.0;
    W[1] = -1.0;
    LabeledDataset ds(1, 2, {0.25, -3.0, 7.5}, {0, 1, 0});
    const auto batch = compute_embeddings(scorer, ds);
    CHECK(batch.embedding_dim == 1);
    CHECK(batch.embeddings == std::vector<double>{0.25, -3.0, 7.5});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double sum = 0.0;
        for (double p : batch.probability(i)) sum += p;
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("compute_embeddings matches per-sample evaluation") {
    Rng rng(3);
    auto scorer = DenseModel::glorot({3, 5, 4, 3}, rng);
    std::vector<double> features;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 20; ++i) {
        for (int k = 0; k < 3; ++k) features.push_back(rng.normal());
        labels.push_back(i % 3);
    }
    LabeledDataset ds(3, 3, features, labels);
    const auto batch = compute_embeddings(scorer, ds);
    CHECK(batch.embedding_dim == 4);
    std::vector<double> g, p;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        compute_embedding(scorer, ds.features(i), g, p);
        const auto bg = batch.embedding(i);
        const auto bp = batch.probability(i);
        CHECK(std::equal(g.begin(), g.end(), bg.begin()));
        CHECK(std::equal(p.begin(), p.end(), bp.begin()));
        // embedding is the post-ReLU penultimate layer
        for (double v : g) CHECK(v >= 0.0);
    }
}

TEST_CASE("compute_embeddings dimension mismatch") {
    DenseModel scorer({2, 3});
    LabeledDataset ds(1, 3, {0.0, 1.0, 2.0}, {0, 1, 2});
    CHECK_THROWS_AS(compute_embeddings(scorer, ds), Error);
}

TEST_CASE("class_centers") {
    auto b = make_batch({{1, 1}, {3, 3}, {5, -1}}, {0, 0, 1}, 2);
    const auto stats = class_centers(b);
    CHECK(stats.centers[0] == std::vector<double>{2, 2});
    CHECK(stats.centers[1] == std::vector<double>{5, -1});

    auto empty = make_batch({{1.0}, {2.0}}, {0, 0}, 2);
    CHECK_THROWS_AS(class_centers(empty), Error);
}

TEST_CASE("class_centers match a brute-force mean") {
    Rng rng(8);
    std::vector<std::vector<double>> emb;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 60; ++i) {
        emb.push_back({rng.normal() * 10, rng.normal(), rng.uniform()});
        labels.push_back(rng.below(3));
    }
    const auto stats = class_centers(make_batch(emb, labels, 3));
    for (std::size_t m = 0; m < 3; ++m) {
        for (std::size_t k = 0; k < 3; ++k) {
            long double sum = 0.0L;
            std::size_t n = 0;
            for (std::size_t i = 0; i < emb.size(); ++i) {
                if (labels[i] == m) {
                    sum += emb[i][k];
                    ++n;
                }
            }
            CHECK(std::abs(stats.centers[m][k] - static_cast<double>(sum / n)) <= 1e-12);
        }
    }
}

TEST_CASE("distance score on two 1-D classes") {
    auto b = make_batch({{0}, {2}, {10}, {12}}, {0, 0, 1, 1}, 2);
    const auto report = score_distance(b, class_centers(b));
    const auto oracle = cel::testing::brute_force_distance_scores({{0}, {2}, {10}, {12}}, {0, 0, 1, 1}, 2);
    // frozen from the oracle: 1 + (1/121 + 1/81) / 2
    CHECK(oracle[0] == doctest::Approx(1.010305).epsilon(1e-6));
    CHECK(std::abs(report.scores[0] - oracle[0]) <= 1e-12);
    CHECK(std::abs(report.scores[0] - 1.0103050709) <= 1e-9);
    CHECK(report.scores[1] == doctest::Approx(report.scores[0]).epsilon(1e-15));
}

TEST_CASE("distance score is 1 when every sample sits on its center") {
    auto b = make_batch({{0, 0}, {3, 4}, {-2, 7}}, {0, 1, 2}, 3);
    const auto report = score_distance(b, class_centers(b));
    for (double s : report.scores) CHECK(s == 1.0);
}

TEST_CASE("distance score stays finite when a sample sits on a foreign center") {
    // class 0 samples at -1 and 1: center 0; class 1 is a single point at 1.
    auto b = make_batch({{-1}, {1}, {1}}, {0, 0, 1}, 2);
    const auto report = score_distance(b, class_centers(b));
    CHECK(std::isfinite(report.scores[0]));
    CHECK(report.scores[0] == doctest::Approx(1.0 + 0.5 * (1.0 / 4.0 + 1.0 / kDistanceEpsilon)));
    CHECK(report.scores[1] == 1.0);
}

TEST_CASE("entropy scores") {
    auto b = make_batch({{0}, {0}, {1}, {1}, {2}, {3}}, {0, 0, 1, 1, 2, 3}, 4);
    set_probabilities(b, {{1, 0, 0, 0}, {0, 1, 0, 0}, {0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25},
                          {0, 0, 1, 0}, {0, 0, 0, 1}});
    auto report = score_entropy(b);
    CHECK(report.scores[0] == 0.0);
    CHECK(report.scores[1] == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(report.scores[1] == doctest::Approx(1.386294).epsilon(1e-6));

    // (0.5, 0.5, 0, 0): direct summation oracle gives ln 2.
    auto half = make_batch({{0}, {1}, {2}, {3}}, {0, 1, 2, 3}, 4);
    const std::vector<std::vector<double>> probs(4, {0.5, 0.5, 0.0, 0.0});
    set_probabilities(half, probs);
    const auto oracle = cel::testing::brute_force_entropy_scores(probs, half.labels, 4);
    report = score_entropy(half);
    for (std::size_t m = 0; m < 4; ++m) {
        CHECK(report.scores[m] == doctest::Approx(oracle[m]).epsilon(1e-15));
        CHECK(report.scores[m] == doctest::Approx(0.693147).epsilon(1e-6));
    }
}

TEST_CASE("order_classes") {
    ConfusionReport r{Criterion::Distance, {0.1, 0.9, 0.5}};
    CHECK(order_classes(r).order == std::vector<std::size_t>{1, 2, 0});
    ConfusionReport ties{Criterion::Entropy, {2.0, 2.0, 2.0, 2.0}};
    CHECK(order_classes(ties).order == std::vector<std::size_t>{0, 1, 2, 3});
    ConfusionReport partial{Criterion::Distance, {1.0, 3.0, 1.0, 3.0}};
    CHECK(order_classes(partial).order == std::vector<std::size_t>{1, 3, 0, 2});
    ConfusionReport nan{Criterion::Distance, {1.0, std::nan("")}};
    CHECK_THROWS_AS(order_classes(nan), Error);
}

TEST_CASE("scores match brute force and respect bounds (property)") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t M = 2 + rng.below(4);
        const std::size_t e = 1 + rng.below(3);
        std::vector<std::vector<double>> emb, probs;
        std::vector<std::size_t> labels;
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t i = 0, n = 1 + rng.below(10); i < n; ++i) {
                std::vector<double> g(e);
                for (auto& v : g) v = rng.normal() * 3.0;
                emb.push_back(g);
                std::vector<double> logits(M);
                for (auto& v : logits) v = rng.normal() * 4.0;
                probs.push_back(softmax(logits));
                labels.push_back(m);
            }
        }
        auto b = make_batch(emb, labels, M);
        set_probabilities(b, probs);
        b.validate();
        const auto dist = score_distance(b, class_centers(b));
        const auto ent = score_entropy(b);
        const auto dist_oracle = cel::testing::brute_force_distance_scores(emb, labels, M);
        const auto ent_oracle = cel::testing::brute_force_entropy_scores(probs, labels, M);
        for (std::size_t m = 0; m < M; ++m) {
            CHECK(std::abs(dist.scores[m] - dist_oracle[m]) <= 1e-9 * std::max(1.0, dist_oracle[m]));
            CHECK(std::abs(ent.scores[m] - ent_oracle[m]) <= 1e-9);
            CHECK(dist.scores[m] >= 1.0);
            CHECK(ent.scores[m] >= 0.0);
            CHECK(ent.scores[m] <= std::log(static_cast<double>(M)) + 1e-12);
        }
        const auto ord = order_classes(dist);
        for (std::size_t r = 1; r < M; ++r) CHECK(dist.scores[ord.order[r - 1]] >= dist.scores[ord.order[r]]);
    }
}

TEST_CASE("embedding and score CSV round trip") {
    auto b = make_batch({{0.5, 1}, {2, 3.25}, {-1, 0}}, {0, 1, 1}, 2);
    set_probabilities(b, {{0.9, 0.1}, {0.3, 0.7}, {0.5, 0.5}});
    auto path = cel::testing::temp_path("emb.csv");
    save_embeddings_csv(b, path);
    const auto loaded = load_embeddings_csv(path);
    CHECK(loaded.embeddings == b.embeddings);
    CHECK(loaded.probabilities == b.probabilities);
    CHECK(loaded.labels == b.labels);

    ConfusionReport r{Criterion::Distance, {1.25, 3.0}};
    auto spath = cel::testing::temp_path("scores.csv");
    save_scores_csv(r, spath);
    CHECK(load_scores_csv(spath).scores == r.scores);
}

TEST_CASE("embeddings CSV without probabilities supports the distance criterion only") {
    auto path = cel::testing::temp_path("emb_only.csv");
    std::ofstream(path) << "label,g_0\ncat,0\ncat,2\ndog,10\ndog,12\n";
    std::vector<std::string> names;
    const auto b = load_embeddings_csv(path, &names);
    CHECK(names == std::vector<std::string>{"cat", "dog"});
    CHECK(score_distance(b, class_centers(b)).scores[0] == doctest::Approx(1.0103050964));
    CHECK_THROWS_AS(score_entropy(b), Error);
}
