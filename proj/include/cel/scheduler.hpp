#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cel/confusion.hpp"
#include "cel/dataset.hpp"

namespace cel {

/// K stages over the ordered classes. Stage k (1-based) trains on the first
/// stage_class_counts[k-1] classes of ordering.order for stage_epochs[k-1]
/// epochs.
struct ExpansionSchedule {
    ClassOrdering ordering;
    std::size_t num_stages = 1;
    std::vector<std::size_t> stage_class_counts;
    std::vector<std::size_t> stage_epochs;
    std::size_t final_epochs = 1;  ///< E, the full budget of the last stage
    double lambda = 1.0;

    std::size_t num_classes() const { return ordering.order.size(); }
    /// Classes admitted at stage k (1-based), in ordering order.
    std::vector<std::size_t> classes_added(std::size_t k) const;
    std::vector<std::size_t> classes_in_pool(std::size_t k) const;
};

/// Training cost in units of one normal run (T_normal = 1).
struct CostModel {
    double normal_cost = 1.0;
    double equal_epoch_cost = 1.0;  ///< every stage gets E epochs
    double reduced_cost = 1.0;      ///< early stages get E / lambda epochs
};

/// Per-stage class additions: floor(M / K), with the M mod K leftovers
/// going one each to the earliest stages.
std::vector<std::size_t> stage_class_counts(std::size_t num_classes, std::size_t num_stages);

/// Early stages run round(E / lambda) epochs (at least 1), the final stage E.
/// `epoch_override`, when given, replaces the per-stage epochs and must have
/// K entries, all >= 1.
ExpansionSchedule build_schedule(const ClassOrdering& ordering, std::size_t num_stages, std::size_t final_epochs,
                                 double lambda,
                                 const std::optional<std::vector<std::size_t>>& epoch_override = std::nullopt);

/// Sorted sample indices of every class admitted by stage k (1-based).
std::vector<std::size_t> pool_at_stage(const ExpansionSchedule& schedule, std::size_t k,
                                       const ClassPartition& partition);

CostModel predicted_cost(std::size_t num_stages, double lambda);

/// sum_k stage_epochs[k] * |pool_k| / (E * |D|).
double measured_cost(const ExpansionSchedule& schedule, const ClassPartition& partition);

/// Identity ordering with zero scores; used for natural class order.
ClassOrdering natural_ordering(std::size_t num_classes);

std::string schedule_table(const ExpansionSchedule& schedule, std::span<const std::string> class_names = {});
std::string schedule_to_json(const ExpansionSchedule& schedule, std::span<const std::string> class_names = {});

}  // namespace cel
