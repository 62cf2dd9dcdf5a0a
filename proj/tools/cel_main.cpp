// cel: command-line front end for class-based expansion learning experiments.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cel/confusion.hpp"
#include "cel/dataset.hpp"
#include "cel/error.hpp"
#include "cel/harness.hpp"
#include "cel/scheduler.hpp"
#include "cel/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::size_t> k;
    std::optional<double> lambda;
    std::optional<std::string> order;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::string> out;
};

void add_overrides(CLI::App* cmd, Overrides& o, bool require_config) {
    auto* opt = cmd->add_option("--config", o.config, "experiment config (JSON)");
    if (require_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--k", o.k, "number of stages K");
    cmd->add_option("--lambda", o.lambda, "early-stage epoch reduction factor");
    cmd->add_option("--order", o.order, "class order: distance|entropy|natural|random");
    cmd->add_option("--seed", o.seed, "run a single seed instead of the configured list");
    cmd->add_option("--epochs", o.epochs, "final-stage epoch budget E");
    cmd->add_option("--out", o.out, "output directory");
}

cel::ExperimentConfig resolve_config(const Overrides& o) {
    cel::ExperimentConfig c = o.config.empty() ? cel::ExperimentConfig{} : cel::load_config(o.config);
    if (o.k) c.num_stages = *o.k;
    if (o.lambda) c.lambda = *o.lambda;
    if (o.order) c.order = cel::order_mode_from_string(*o.order);
    if (o.seed) c.seeds = {*o.seed};
    if (o.epochs) c.epochs = *o.epochs;
    if (o.out) c.output_dir = *o.out;
    return c;
}

fs::path output_dir(const cel::ExperimentConfig& c) {
    const fs::path dir = c.output_dir.empty() ? fs::path(".") : c.output_dir;
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw cel::Error(cel::ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

void print_scores(const cel::ConfusionReport& report, const std::vector<std::string>& names) {
    std::printf("%-16s %s (%s)\n", "class", "score", cel::to_string(report.criterion));
    for (std::size_t m = 0; m < report.scores.size(); ++m)
        std::printf("%-16s %.9f\n", names.empty() ? std::to_string(m).c_str() : names[m].c_str(), report.scores[m]);
}

cel::ConfusionReport score_from_config(const cel::ExperimentConfig& c, cel::Criterion criterion,
                                       std::vector<std::string>& names, const fs::path* embeddings_out) {
    c.validate();
    const auto data = cel::prepare_data(c.data);
    names = data.train.class_names();
    const auto scorer = cel::train_scorer(c, data.train, c.seeds.front());
    const auto batch = cel::compute_embeddings(scorer, data.train);
    if (embeddings_out) cel::save_embeddings_csv(batch, *embeddings_out, names);
    return criterion == cel::Criterion::Distance
               ? cel::score_distance(batch, cel::class_centers(batch, cel::partition_by_class(data.train)))
               : cel::score_entropy(batch);
}

cel::ConfusionReport score_from_embeddings(const fs::path& path, cel::Criterion criterion,
                                           std::vector<std::string>& names) {
    const auto batch = cel::load_embeddings_csv(path, &names);
    return criterion == cel::Criterion::Distance ? cel::score_distance(batch, cel::class_centers(batch))
                                                 : cel::score_entropy(batch);
}

int report_error(const std::string& kind, const std::string& message, std::optional<std::size_t> epoch = {}) {
    nlohmann::json j;
    j["error"]["kind"] = kind;
    j["error"]["message"] = message;
    if (epoch) j["error"]["epoch"] = *epoch;
    std::cerr << j.dump() << '\n';
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Class-based expansion learning: confusion scoring, staged training and comparison"};
    app.require_subcommand(1);

    Overrides gen_o, score_o, order_o, sched_o, train_o;

    auto* gen = app.add_subcommand("gen-data", "generate (or load) the configured dataset and write CSV splits");
    add_overrides(gen, gen_o, true);

    std::string score_embeddings, score_criterion = "distance";
    auto* score = app.add_subcommand("score", "train the scorer and compute per-class confusion scores");
    add_overrides(score, score_o, false);
    score->add_option("--embeddings", score_embeddings, "score an embeddings CSV instead of training a scorer")
        ->check(CLI::ExistingFile);
    score->add_option("--criterion", score_criterion, "distance|entropy");

    std::string order_embeddings, order_scores, order_criterion = "distance";
    auto* order = app.add_subcommand("order", "compute the hardest-first class ordering");
    add_overrides(order, order_o, false);
    order->add_option("--embeddings", order_embeddings, "order from an embeddings CSV")->check(CLI::ExistingFile);
    order->add_option("--scores", order_scores, "order from a scores CSV (class_id,score)")->check(CLI::ExistingFile);
    order->add_option("--criterion", order_criterion, "distance|entropy");

    std::optional<std::size_t> sched_classes;
    bool sched_json = false;
    auto* sched = app.add_subcommand("schedule", "print the stage table for a K-stage expansion");
    add_overrides(sched, sched_o, false);
    sched->add_option("--num-classes", sched_classes, "schedule M classes in natural order without loading data");
    sched->add_flag("--json", sched_json, "print JSON instead of the text table");

    std::string train_mode = "cel";
    bool match_cost = false;
    auto* train = app.add_subcommand("train", "run normal or CEL training for every configured seed");
    add_overrides(train, train_o, true);
    train->add_option("--mode", train_mode, "normal|cel")->check(CLI::IsMember({"normal", "cel"}));
    train->add_flag("--match-cost", match_cost,
                    "normal mode: train for round(measured CEL cost x E) epochs (natural-order class sizes)");

    std::string cmp_a, cmp_b, cmp_out;
    bool cmp_json = false;
    auto* cmp = app.add_subcommand("compare", "compare two report.json files (deltas are B - A)");
    cmp->add_option("a", cmp_a, "baseline report")->required()->check(CLI::ExistingFile);
    cmp->add_option("b", cmp_b, "candidate report")->required()->check(CLI::ExistingFile);
    cmp->add_flag("--json", cmp_json, "print JSON instead of the text table");
    cmp->add_option("--out", cmp_out, "also write the comparison JSON to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what());
    }

    try {
        if (*gen) {
            const auto c = resolve_config(gen_o);
            c.validate();
            const auto dir = output_dir(c);
            const auto data = cel::prepare_data(c.data);
            cel::save_csv(data.train, dir / "train.csv");
            cel::save_csv(data.test, dir / "test.csv");
            std::printf("wrote %zu train and %zu test samples (%zu classes, d=%zu) to %s\n", data.train.size(),
                        data.test.size(), data.train.num_classes(), data.train.feature_dim(), dir.string().c_str());
        } else if (*score) {
            std::vector<std::string> names;
            const auto criterion = cel::criterion_from_string(score_criterion);
            cel::ConfusionReport report;
            fs::path dir;
            if (!score_embeddings.empty()) {
                report = score_from_embeddings(score_embeddings, criterion, names);
                if (score_o.out) dir = output_dir(resolve_config(score_o));
            } else {
                if (score_o.config.empty()) throw cel::Error(cel::ErrorKind::Config, "score needs --config or --embeddings");
                const auto c = resolve_config(score_o);
                dir = output_dir(c);
                const auto emb = dir / "embeddings.csv";
                report = score_from_config(c, criterion, names, &emb);
            }
            if (!dir.empty()) cel::save_scores_csv(report, dir / "scores.csv", names);
            print_scores(report, names);
        } else if (*order) {
            std::vector<std::string> names;
            const auto criterion = cel::criterion_from_string(order_criterion);
            cel::ClassOrdering ordering;
            fs::path dir;
            if (!order_scores.empty()) {
                ordering = cel::order_classes(cel::load_scores_csv(order_scores, criterion));
            } else if (!order_embeddings.empty()) {
                ordering = cel::order_classes(score_from_embeddings(order_embeddings, criterion, names));
            } else {
                if (order_o.config.empty())
                    throw cel::Error(cel::ErrorKind::Config, "order needs --config, --embeddings or --scores");
                auto c = resolve_config(order_o);
                c.validate();
                const auto data = cel::prepare_data(c.data);
                names = data.train.class_names();
                ordering = cel::compute_ordering(c, data.train, c.seeds.front());
            }
            if (order_o.out || !order_o.config.empty()) dir = output_dir(resolve_config(order_o));
            const auto csv = cel::ordering_csv(ordering, names);
            if (!dir.empty()) write_file(dir / "ordering.csv", csv);
            std::fputs(csv.c_str(), stdout);
        } else if (*sched) {
            auto c = resolve_config(sched_o);
            cel::ClassOrdering ordering;
            std::vector<std::string> names;
            if (sched_classes) {
                ordering = cel::natural_ordering(*sched_classes);
            } else {
                if (sched_o.config.empty())
                    throw cel::Error(cel::ErrorKind::Config, "schedule needs --config or --num-classes");
                c.validate();
                const auto data = cel::prepare_data(c.data);
                names = data.train.class_names();
                ordering = cel::compute_ordering(c, data.train, c.seeds.front());
            }
            const auto schedule = cel::build_schedule(ordering, c.num_stages, c.epochs, c.lambda, c.stage_epochs);
            const auto json_text = cel::schedule_to_json(schedule, names);
            if (sched_o.out) write_file(output_dir(c) / "schedule.json", json_text + "\n");
            std::fputs(sched_json ? (json_text + "\n").c_str() : cel::schedule_table(schedule, names).c_str(), stdout);
        } else if (*train) {
            auto c = resolve_config(train_o);
            if (c.output_dir.empty()) c.output_dir = "cel_out";
            cel::ExperimentReport report;
            if (train_mode == "cel") {
                report = cel::run_cel(c);
            } else {
                if (match_cost) {
                    c.validate();
                    const auto data = cel::prepare_data(c.data);
                    const auto schedule = cel::build_schedule(cel::natural_ordering(data.train.num_classes()),
                                                              c.num_stages, c.epochs, c.lambda, c.stage_epochs);
                    const double cost = cel::measured_cost(schedule, cel::partition_by_class(data.train));
                    c.normal_epochs = static_cast<std::size_t>(std::llround(cost * static_cast<double>(c.epochs)));
                }
                report = cel::run_normal(c);
            }
            std::printf("mode=%s seeds=%zu mean test error %.2f%% (sd %.2f, best %.2f @ seed %llu), mean cost %.4f\n",
                        report.mode.c_str(), report.runs.size(), 100.0 * report.aggregate.mean_error,
                        100.0 * report.aggregate.stddev_error, 100.0 * report.aggregate.best_error,
                        static_cast<unsigned long long>(report.aggregate.best_seed),
                        report.aggregate.mean_measured_cost);
            std::printf("report: %s\n", (c.output_dir / "report.json").string().c_str());
        } else if (*cmp) {
            const auto result = cel::compare(cel::load_report(cmp_a), cel::load_report(cmp_b));
            const auto json_text = cel::comparison_to_json(result);
            if (!cmp_out.empty()) write_file(cmp_out, json_text + "\n");
            std::fputs(cmp_json ? (json_text + "\n").c_str() : cel::comparison_table(result).c_str(), stdout);
        }
    } catch (const cel::DivergenceError& e) {
        return report_error(cel::to_string(e.kind()), e.what(), e.epoch());
    } catch (const cel::Error& e) {
        return report_error(cel::to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return report_error("internal", e.what());
    }
    return 0;
}
