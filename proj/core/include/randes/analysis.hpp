#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "randes/schema.hpp"
#include "randes/tensor.hpp"
#include "randes/transform.hpp"

namespace randes {

// During retrieval of task i, every other task j contributes
// lambda * Oi^-1(Oj(delta_j)) of noise on top of the wanted checkpoint.
// interference_norm_direct materializes that sum and measures it;
// interference_norm_expansion computes the same quantity from the norms and
// pairwise cosines of the per-task terms, without forming the sum.

double interference_norm_direct(std::span<const TensorMap> deltas,
                                std::span<const MaterializedTransform> transforms,
                                size_t task_index, double lambda);

double interference_norm_expansion(std::span<const TensorMap> deltas,
                                   std::span<const MaterializedTransform> transforms,
                                   size_t task_index, double lambda);

struct PairwiseSummary {
    double mean = 0.0;
    double mean_abs = 0.0;
    double max_abs = 0.0;
    size_t defined_pairs = 0;
};

struct PairwiseCosineStats {
    // T x T cosine matrix; an entry is null when either operand has zero
    // norm (that is data, not an error)
    std::vector<std::vector<std::optional<double>>> matrix;
    // over defined off-diagonal pairs
    PairwiseSummary summary;
    // cosines between different same-type layers inside one model; needs a
    // schema, empty otherwise
    std::vector<double> within_model;
    // cosines of the same layer across two models
    std::vector<double> across_model;
};

// Cosine structure of the deltas, transformed first when transforms are
// given (one per delta).
PairwiseCosineStats pairwise_cosine_stats(std::span<const TensorMap> deltas,
                                          std::span<const MaterializedTransform> transforms = {},
                                          const ModelSchema* schema = nullptr);

struct InterferenceReport {
    std::string task_id;
    double lambda = 0.0;
    double direct_norm = 0.0;
    double expansion_norm = 0.0;
    double mean_abs_cosine = 0.0;
    std::vector<std::vector<std::optional<double>>> pairwise;
};

// Full per-task report. The pairwise matrix and mean_abs_cosine cover the
// transformed deltas as seen during this task's retrieval.
InterferenceReport analyze_task(std::span<const TensorMap> deltas,
                                std::span<const MaterializedTransform> transforms,
                                std::span<const std::string> task_ids, size_t task_index,
                                double lambda);

std::string reports_to_json(std::span<const InterferenceReport> reports,
                            const PairwiseCosineStats* raw_stats = nullptr);
std::string pairwise_to_csv(const PairwiseCosineStats& stats,
                            std::span<const std::string> task_ids);

}  // namespace randes
