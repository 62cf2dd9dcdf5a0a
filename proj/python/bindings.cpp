#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cel/confusion.hpp"
#include "cel/dataset.hpp"
#include "cel/error.hpp"
#include "cel/harness.hpp"
#include "cel/model.hpp"
#include "cel/scheduler.hpp"
#include "cel/trainer.hpp"

namespace py = pybind11;
using namespace cel;

namespace {

std::vector<double> flatten(const std::vector<std::vector<double>>& rows, std::size_t& width) {
    if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "no rows given");
    width = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * width);
    for (const auto& r : rows) {
        if (r.size() != width) throw Error(ErrorKind::DimensionMismatch, "rows have different lengths");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return flat;
}

std::vector<std::vector<double>> rows_of(const std::vector<double>& flat, std::size_t width) {
    std::vector<std::vector<double>> rows;
    if (width == 0) return rows;
    for (std::size_t i = 0; i < flat.size(); i += width) rows.emplace_back(flat.begin() + i, flat.begin() + i + width);
    return rows;
}

// Leaked on purpose: the exception types must outlive module teardown.
py::exception<Error>* error_type = nullptr;
py::exception<DivergenceError>* divergence_type = nullptr;

std::vector<std::size_t> all_indices(const LabeledDataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Class-based expansion learning: confusion scoring, staged training and cost accounting";

    error_type = new py::exception<Error>(m, "CelError");
    divergence_type = new py::exception<DivergenceError>(m, "DivergenceError", error_type->ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const DivergenceError& e) {
            py::object exc = py::handle(divergence_type->ptr())(e.what());
            exc.attr("kind") = to_string(e.kind());
            exc.attr("epoch") = e.epoch();
            PyErr_SetObject(divergence_type->ptr(), exc.ptr());
        } catch (const Error& e) {
            py::object exc = py::handle(error_type->ptr())(e.what());
            exc.attr("kind") = to_string(e.kind());
            PyErr_SetObject(error_type->ptr(), exc.ptr());
        }
    });

    // dataset
    py::class_<LabeledDataset>(m, "LabeledDataset")
        .def(py::init([](const std::vector<std::vector<double>>& features, std::vector<std::size_t> labels,
                         std::size_t num_classes, std::vector<std::string> class_names) {
                 std::size_t d = 0;
                 auto flat = flatten(features, d);
                 return LabeledDataset(d, num_classes, std::move(flat), std::move(labels), std::move(class_names));
             }),
             py::arg("features"), py::arg("labels"), py::arg("num_classes"),
             py::arg("class_names") = std::vector<std::string>{})
        .def("__len__", &LabeledDataset::size)
        .def_property_readonly("feature_dim", &LabeledDataset::feature_dim)
        .def_property_readonly("num_classes", &LabeledDataset::num_classes)
        .def_property_readonly("labels", &LabeledDataset::labels)
        .def_property_readonly("class_names", &LabeledDataset::class_names)
        .def_property_readonly("features",
                               [](const LabeledDataset& ds) { return rows_of(ds.feature_buffer(), ds.feature_dim()); })
        .def("subset", [](const LabeledDataset& ds, const std::vector<std::size_t>& idx) { return ds.subset(idx); })
        .def("fingerprint", &LabeledDataset::fingerprint)
        .def("__eq__", [](const LabeledDataset& a, const LabeledDataset& b) { return a == b; });

    py::class_<BlobSpec>(m, "BlobSpec")
        .def(py::init<>())
        .def_readwrite("num_classes", &BlobSpec::num_classes)
        .def_readwrite("per_class_count", &BlobSpec::per_class_count)
        .def_readwrite("feature_dim", &BlobSpec::feature_dim)
        .def_readwrite("class_means", &BlobSpec::class_means)
        .def_readwrite("class_stddev", &BlobSpec::class_stddev)
        .def_readwrite("overlap_pairs", &BlobSpec::overlap_pairs)
        .def_readwrite("seed", &BlobSpec::seed);

    m.def("generate_blobs", &generate_blobs, py::arg("spec"));
    m.def("blob_means", &blob_means, py::arg("spec"));
    m.def("load_csv", &load_csv, py::arg("path"), py::arg("label_column") = "label");
    m.def("save_csv", &save_csv, py::arg("dataset"), py::arg("path"), py::arg("label_column") = "label");
    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("partition_by_class", [](const LabeledDataset& ds) { return partition_by_class(ds).per_class; });
    m.def(
        "split_train_test",
        [](const LabeledDataset& ds, double fraction, std::uint64_t seed) {
            auto s = split_train_test(ds, fraction, seed);
            return py::make_tuple(s.train, s.test);
        },
        py::arg("dataset"), py::arg("test_fraction"), py::arg("seed") = 0);

    // confusion
    py::class_<EmbeddingBatch>(m, "EmbeddingBatch")
        .def(py::init([](const std::vector<std::vector<double>>& embeddings, std::vector<std::size_t> labels,
                         std::size_t num_classes, const std::vector<std::vector<double>>& probabilities) {
                 EmbeddingBatch b;
                 b.num_classes = num_classes;
                 b.embeddings = flatten(embeddings, b.embedding_dim);
                 b.labels = std::move(labels);
                 if (!probabilities.empty()) {
                     std::size_t width = 0;
                     b.probabilities = flatten(probabilities, width);
                     if (width != num_classes)
                         throw Error(ErrorKind::DimensionMismatch, "probability rows must have num_classes entries");
                 }
                 b.validate();
                 return b;
             }),
             py::arg("embeddings"), py::arg("labels"), py::arg("num_classes"),
             py::arg("probabilities") = std::vector<std::vector<double>>{})
        .def("__len__", &EmbeddingBatch::size)
        .def_readonly("num_classes", &EmbeddingBatch::num_classes)
        .def_readonly("embedding_dim", &EmbeddingBatch::embedding_dim)
        .def_readonly("labels", &EmbeddingBatch::labels)
        .def_property_readonly("embeddings", [](const EmbeddingBatch& b) { return rows_of(b.embeddings, b.embedding_dim); })
        .def_property_readonly("probabilities",
                               [](const EmbeddingBatch& b) { return rows_of(b.probabilities, b.num_classes); });

    py::class_<ConfusionReport>(m, "ConfusionReport")
        .def(py::init([](std::vector<double> scores, const std::string& criterion) {
                 return ConfusionReport{criterion_from_string(criterion), std::move(scores)};
             }),
             py::arg("scores"), py::arg("criterion") = "distance")
        .def_property_readonly("criterion", [](const ConfusionReport& r) { return std::string(to_string(r.criterion)); })
        .def_readonly("scores", &ConfusionReport::scores);

    py::class_<ClassOrdering>(m, "ClassOrdering")
        .def_readonly("order", &ClassOrdering::order)
        .def_readonly("source", &ClassOrdering::source);

    m.def("compute_embeddings", &compute_embeddings, py::arg("scorer"), py::arg("dataset"));
    m.def("class_centers", [](const EmbeddingBatch& b) { return class_centers(b).centers; });
    m.def("score_distance", [](const EmbeddingBatch& b) { return score_distance(b, class_centers(b)); });
    m.def("score_entropy", &score_entropy);
    m.def("order_classes", &order_classes, py::arg("report"));
    m.def("natural_ordering", &natural_ordering, py::arg("num_classes"));

    // scheduler
    py::class_<ExpansionSchedule>(m, "ExpansionSchedule")
        .def_readonly("ordering", &ExpansionSchedule::ordering)
        .def_readonly("num_stages", &ExpansionSchedule::num_stages)
        .def_readonly("stage_class_counts", &ExpansionSchedule::stage_class_counts)
        .def_readonly("stage_epochs", &ExpansionSchedule::stage_epochs)
        .def_readonly("final_epochs", &ExpansionSchedule::final_epochs)
        .def_readonly("lambda_", &ExpansionSchedule::lambda)
        .def("classes_added", &ExpansionSchedule::classes_added, py::arg("stage"))
        .def("classes_in_pool", &ExpansionSchedule::classes_in_pool, py::arg("stage"))
        .def("table", [](const ExpansionSchedule& s) { return schedule_table(s); })
        .def("to_json", [](const ExpansionSchedule& s) { return schedule_to_json(s); });

    py::class_<CostModel>(m, "CostModel")
        .def_readonly("normal_cost", &CostModel::normal_cost)
        .def_readonly("equal_epoch_cost", &CostModel::equal_epoch_cost)
        .def_readonly("reduced_cost", &CostModel::reduced_cost);

    m.def("stage_class_counts", &stage_class_counts, py::arg("num_classes"), py::arg("num_stages"));
    m.def("build_schedule", &build_schedule, py::arg("ordering"), py::arg("num_stages"), py::arg("final_epochs"),
          py::arg("lambda_"), py::arg("stage_epochs") = std::nullopt);
    m.def(
        "pool_at_stage",
        [](const ExpansionSchedule& s, std::size_t k, const LabeledDataset& ds) {
            return pool_at_stage(s, k, partition_by_class(ds));
        },
        py::arg("schedule"), py::arg("stage"), py::arg("dataset"));
    m.def("predicted_cost", &predicted_cost, py::arg("num_stages"), py::arg("lambda_"));
    m.def(
        "measured_cost",
        [](const ExpansionSchedule& s, const LabeledDataset& ds) { return measured_cost(s, partition_by_class(ds)); },
        py::arg("schedule"), py::arg("dataset"));

    // model
    py::class_<DenseModel>(m, "DenseModel")
        .def(py::init<std::vector<std::size_t>>(), py::arg("layer_dims"))
        .def_static(
            "glorot",
            [](std::vector<std::size_t> dims, std::uint64_t seed) {
                Rng rng(seed);
                return DenseModel::glorot(std::move(dims), rng);
            },
            py::arg("layer_dims"), py::arg("seed") = 0)
        .def_property_readonly("layer_dims", &DenseModel::layer_dims)
        .def_property(
            "parameters",
            [](const DenseModel& model) {
                const auto p = model.parameters();
                return std::vector<double>(p.begin(), p.end());
            },
            [](DenseModel& model, const std::vector<double>& values) {
                if (values.size() != model.num_parameters())
                    throw Error(ErrorKind::DimensionMismatch, "parameter vector has the wrong length");
                std::copy(values.begin(), values.end(), model.parameters().begin());
            })
        .def("forward", [](const DenseModel& model, const std::vector<double>& x) { return forward(model, x); })
        .def("__eq__", [](const DenseModel& a, const DenseModel& b) { return a == b; });

    m.def("softmax", [](const std::vector<double>& z) { return softmax(z); });
    m.def("loss", [](const std::vector<double>& z, std::size_t label) { return loss(z, label); });
    m.def(
        "gradients",
        [](const DenseModel& model, const LabeledDataset& ds, std::optional<std::vector<std::size_t>> batch) {
            const auto idx = batch ? *batch : all_indices(ds);
            auto g = gradients(model, ds, idx);
            return py::make_tuple(g.grad, g.mean_loss);
        },
        py::arg("model"), py::arg("dataset"), py::arg("batch") = std::nullopt);
    m.def(
        "grad_check",
        [](const DenseModel& model, const LabeledDataset& ds, std::optional<std::vector<std::size_t>> batch,
           double step) {
            const auto idx = batch ? *batch : all_indices(ds);
            return grad_check(model, ds, idx, step);
        },
        py::arg("model"), py::arg("dataset"), py::arg("batch") = std::nullopt, py::arg("step") = 1e-5);

    // trainer
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("initial_lr", &TrainConfig::initial_lr)
        .def_readwrite("momentum", &TrainConfig::momentum)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("lr_drop_points", &TrainConfig::lr_drop_points)
        .def_readwrite("lr_drop_factor", &TrainConfig::lr_drop_factor)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_readonly("model", &Checkpoint::model)
        .def_readonly("stage", &Checkpoint::stage)
        .def_readonly("epoch", &Checkpoint::epoch)
        .def("to_json", [](const Checkpoint& c) { return checkpoint_to_json(c); })
        .def_static("from_json", &checkpoint_from_json)
        .def("__eq__", [](const Checkpoint& a, const Checkpoint& b) { return a == b; });

    py::class_<EpochMetrics>(m, "EpochMetrics")
        .def_readonly("stage", &EpochMetrics::stage)
        .def_readonly("epoch", &EpochMetrics::epoch)
        .def_readonly("train_loss", &EpochMetrics::train_loss)
        .def_readonly("val_loss", &EpochMetrics::val_loss)
        .def_readonly("accuracy", &EpochMetrics::accuracy)
        .def_readonly("per_class_error", &EpochMetrics::per_class_error)
        .def_readonly("per_class_count", &EpochMetrics::per_class_count)
        .def_property_readonly("overall_error", &EpochMetrics::overall_error);

    m.def("lr_at_epoch", &lr_at_epoch, py::arg("config"), py::arg("epoch"));
    m.def("initial_checkpoint", &initial_checkpoint, py::arg("layer_dims"), py::arg("seed") = 0);
    m.def("save_checkpoint", &save_checkpoint, py::arg("checkpoint"), py::arg("path"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
    m.def(
        "evaluate", [](const DenseModel& model, const LabeledDataset& ds) { return evaluate(model, ds); },
        py::arg("model"), py::arg("dataset"));
    m.def(
        "train_stage",
        [](const Checkpoint& init, const std::vector<std::size_t>& pool, const LabeledDataset& train,
           const TrainConfig& config, const LabeledDataset* eval) {
            StageResult r;
            {
                py::gil_scoped_release release;
                r = train_stage(init, pool, train, config, eval);
            }
            return py::make_tuple(r.checkpoint, r.metrics);
        },
        py::arg("init"), py::arg("pool"), py::arg("train"), py::arg("config"), py::arg("eval") = nullptr);

    // harness
    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_static("from_json", &parse_config, py::arg("text"), py::arg("base_dir") = std::filesystem::path{})
        .def_static("load", &load_config, py::arg("path"))
        .def_readwrite("num_stages", &ExperimentConfig::num_stages)
        .def_readwrite("epochs", &ExperimentConfig::epochs)
        .def_readwrite("lambda_", &ExperimentConfig::lambda)
        .def_readwrite("seeds", &ExperimentConfig::seeds)
        .def_readwrite("normal_epochs", &ExperimentConfig::normal_epochs)
        .def_readwrite("stage_epochs", &ExperimentConfig::stage_epochs)
        .def_readwrite("output_dir", &ExperimentConfig::output_dir)
        .def_property(
            "order", [](const ExperimentConfig& c) { return std::string(to_string(c.order)); },
            [](ExperimentConfig& c, const std::string& name) { c.order = order_mode_from_string(name); })
        .def("validate", &ExperimentConfig::validate);

    py::class_<ExperimentReport>(m, "ExperimentReport")
        .def_readonly("mode", &ExperimentReport::mode)
        .def_readonly("class_names", &ExperimentReport::class_names)
        .def_property_readonly("mean_error", [](const ExperimentReport& r) { return r.aggregate.mean_error; })
        .def_property_readonly("mean_per_class_error",
                               [](const ExperimentReport& r) { return r.aggregate.mean_per_class_error; })
        .def_property_readonly("mean_measured_cost",
                               [](const ExperimentReport& r) { return r.aggregate.mean_measured_cost; })
        .def_property_readonly("orderings",
                               [](const ExperimentReport& r) {
                                   std::vector<std::vector<std::size_t>> out;
                                   for (const auto& run : r.runs) out.push_back(run.ordering.order);
                                   return out;
                               })
        .def("to_json", [](const ExperimentReport& r) { return report_to_json(r); })
        .def("results_json", [](const ExperimentReport& r) { return results_to_json(r); })
        .def_static("from_json", &report_from_json)
        .def_static("load", &load_report, py::arg("path"));

    m.def(
        "run_cel",
        [](const ExperimentConfig& c) {
            py::gil_scoped_release release;
            return run_cel(c);
        },
        py::arg("config"));
    m.def(
        "run_normal",
        [](const ExperimentConfig& c) {
            py::gil_scoped_release release;
            return run_normal(c);
        },
        py::arg("config"));

    py::class_<Comparison>(m, "Comparison")
        .def_readonly("class_names", &Comparison::class_names)
        .def_readonly("preferential_classes", &Comparison::preferential_classes)
        .def_readonly("overall_delta", &Comparison::overall_delta)
        .def_readonly("per_class_delta", &Comparison::per_class_delta)
        .def("table", [](const Comparison& c) { return comparison_table(c); })
        .def("to_json", [](const Comparison& c) { return comparison_to_json(c); });
    m.def("compare", &compare, py::arg("a"), py::arg("b"));
}
