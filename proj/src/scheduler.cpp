#include "cel/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cel/error.hpp"

namespace cel {

std::vector<std::size_t> ExpansionSchedule::classes_added(std::size_t k) const {
    if (k < 1 || k > num_stages) throw Error(ErrorKind::InvalidArgument, "stage index out of range");
    const std::size_t begin = k == 1 ? 0 : stage_class_counts[k - 2];
    const std::size_t end = stage_class_counts[k - 1];
    return {ordering.order.begin() + static_cast<std::ptrdiff_t>(begin),
            ordering.order.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<std::size_t> ExpansionSchedule::classes_in_pool(std::size_t k) const {
    if (k < 1 || k > num_stages) throw Error(ErrorKind::InvalidArgument, "stage index out of range");
    return {ordering.order.begin(), ordering.order.begin() + static_cast<std::ptrdiff_t>(stage_class_counts[k - 1])};
}

std::vector<std::size_t> stage_class_counts(std::size_t num_classes, std::size_t num_stages) {
    if (num_stages < 1) throw Error(ErrorKind::InvalidArgument, "K must be >= 1");
    if (num_stages > num_classes)
        throw Error(ErrorKind::InvalidArgument, "K = " + std::to_string(num_stages) + " exceeds M = " +
                                                    std::to_string(num_classes));
    const std::size_t base = num_classes / num_stages;
    const std::size_t extra = num_classes % num_stages;
    std::vector<std::size_t> cumulative(num_stages);
    std::size_t total = 0;
    for (std::size_t k = 0; k < num_stages; ++k) {
        total += base + (k < extra ? 1 : 0);
        cumulative[k] = total;
    }
    return cumulative;
}

ExpansionSchedule build_schedule(const ClassOrdering& ordering, std::size_t num_stages, std::size_t final_epochs,
                                 double lambda, const std::optional<std::vector<std::size_t>>& epoch_override) {
    if (final_epochs < 1) throw Error(ErrorKind::InvalidArgument, "E must be >= 1");
    if (!(lambda >= 1.0) || !std::isfinite(lambda)) throw Error(ErrorKind::InvalidArgument, "lambda must be >= 1");
    const std::size_t M = ordering.order.size();
    {
        std::vector<std::size_t> sorted = ordering.order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < M; ++i) {
            if (sorted[i] != i) throw Error(ErrorKind::InvalidArgument, "ordering is not a permutation");
        }
    }

    ExpansionSchedule s;
    s.ordering = ordering;
    s.num_stages = num_stages;
    s.stage_class_counts = stage_class_counts(M, num_stages);
    s.final_epochs = final_epochs;
    s.lambda = lambda;
    if (epoch_override) {
        if (epoch_override->size() != num_stages)
            throw Error(ErrorKind::InvalidArgument, "stage epoch override needs one entry per stage");
        for (auto e : *epoch_override) {
            if (e < 1) throw Error(ErrorKind::InvalidArgument, "stage epochs must be >= 1");
        }
        s.stage_epochs = *epoch_override;
    } else {
        const auto early = static_cast<std::size_t>(
            std::max(1.0, std::round(static_cast<double>(final_epochs) / lambda)));
        s.stage_epochs.assign(num_stages, early);
        s.stage_epochs.back() = final_epochs;
    }
    return s;
}

std::vector<std::size_t> pool_at_stage(const ExpansionSchedule& schedule, std::size_t k,
                                       const ClassPartition& partition) {
    if (partition.num_classes() != schedule.num_classes())
        throw Error(ErrorKind::DimensionMismatch, "partition and schedule disagree on the number of classes");
    std::vector<std::size_t> pool;
    for (auto c : schedule.classes_in_pool(k)) {
        const auto& members = partition.per_class[c];
        pool.insert(pool.end(), members.begin(), members.end());
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

CostModel predicted_cost(std::size_t num_stages, double lambda) {
    if (num_stages < 1) throw Error(ErrorKind::InvalidArgument, "K must be >= 1");
    if (!(lambda >= 1.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be >= 1");
    const auto K = static_cast<double>(num_stages);
    CostModel c;
    c.equal_epoch_cost = (K + 1.0) / 2.0;
    c.reduced_cost = (K - 1.0) / (2.0 * lambda) + 1.0;
    return c;
}

double measured_cost(const ExpansionSchedule& schedule, const ClassPartition& partition) {
    const std::size_t total = partition.total();
    if (total == 0) throw Error(ErrorKind::InvalidArgument, "empty dataset");
    std::vector<std::size_t> class_size(partition.num_classes());
    for (std::size_t c = 0; c < class_size.size(); ++c) class_size[c] = partition.per_class[c].size();
    double passes = 0.0;
    for (std::size_t k = 1; k <= schedule.num_stages; ++k) {
        std::size_t pool = 0;
        for (auto c : schedule.classes_in_pool(k)) pool += class_size[c];
        passes += static_cast<double>(schedule.stage_epochs[k - 1]) * static_cast<double>(pool);
    }
    return passes / (static_cast<double>(schedule.final_epochs) * static_cast<double>(total));
}

ClassOrdering natural_ordering(std::size_t num_classes) {
    ClassOrdering o;
    o.order.resize(num_classes);
    std::iota(o.order.begin(), o.order.end(), std::size_t{0});
    o.source.scores.assign(num_classes, 0.0);
    return o;
}

namespace {

std::string name_of(std::size_t c, std::span<const std::string> names) {
    return names.empty() ? std::to_string(c) : names[c];
}

std::string join_names(const std::vector<std::size_t>& classes, std::span<const std::string> names) {
    std::string out;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (i) out += ' ';
        out += name_of(classes[i], names);
    }
    return out;
}

}  // namespace

std::string schedule_table(const ExpansionSchedule& s, std::span<const std::string> class_names) {
    // Stage cost here is the dataset fraction k-th pool covers under equal
    // class sizes, times the stage's epochs relative to E.
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-6s %-8s %-11s %-7s %-10s %s\n", "stage", "added", "cumulative", "epochs",
                  "pred_cost", "classes_added");
    os << line;
    const double M = static_cast<double>(s.num_classes());
    double total = 0.0;
    for (std::size_t k = 1; k <= s.num_stages; ++k) {
        const auto added = s.classes_added(k);
        const double cost = static_cast<double>(s.stage_epochs[k - 1]) / static_cast<double>(s.final_epochs) *
                            static_cast<double>(s.stage_class_counts[k - 1]) / M;
        total += cost;
        std::snprintf(line, sizeof line, "%-6zu %-8zu %-11zu %-7zu %-10.4f ", k, added.size(),
                      s.stage_class_counts[k - 1], s.stage_epochs[k - 1], cost);
        os << line << join_names(added, class_names) << '\n';
    }
    const auto model = predicted_cost(s.num_stages, s.lambda);
    std::snprintf(line, sizeof line, "total predicted cost: %.4f x T_normal (equal-epoch %.4f, reduced %.4f)\n", total,
                  model.equal_epoch_cost, model.reduced_cost);
    os << line;
    return os.str();
}

std::string schedule_to_json(const ExpansionSchedule& s, std::span<const std::string> class_names) {
    nlohmann::json j;
    j["num_stages"] = s.num_stages;
    j["final_epochs"] = s.final_epochs;
    j["lambda"] = s.lambda;
    j["ordering"] = s.ordering.order;
    j["criterion_scores"] = s.ordering.source.scores;
    j["stage_class_counts"] = s.stage_class_counts;
    j["stage_epochs"] = s.stage_epochs;
    nlohmann::json stages = nlohmann::json::array();
    for (std::size_t k = 1; k <= s.num_stages; ++k) {
        nlohmann::json st;
        st["stage"] = k;
        st["classes_added"] = s.classes_added(k);
        if (!class_names.empty()) {
            std::vector<std::string> names;
            for (auto c : s.classes_added(k)) names.push_back(class_names[c]);
            st["class_names_added"] = names;
        }
        st["cumulative_classes"] = s.stage_class_counts[k - 1];
        st["epochs"] = s.stage_epochs[k - 1];
        stages.push_back(st);
    }
    j["stages"] = stages;
    const auto model = predicted_cost(s.num_stages, s.lambda);
    j["predicted_cost"] = {{"normal", model.normal_cost},
                           {"equal_epoch", model.equal_epoch_cost},
                           {"reduced", model.reduced_cost}};
    return j.dump(2);
}

}  // namespace cel
