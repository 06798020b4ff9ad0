#include "randes/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "randes/errors.hpp"

namespace randes {

using nlohmann::json;

static void validate_args(size_t count, size_t transforms, size_t task_index) {
    if (count == 0) throw ConfigError("no deltas given");
    if (transforms != count) throw ConfigError("need one transform per delta");
    if (task_index >= count) {
        throw ConfigError("task index " + std::to_string(task_index) + " out of range");
    }
}

// the noise terms lambda * Oi^-1(Oj(delta_j)) for all j != i, without lambda
static std::vector<TensorMap> retrieval_terms(std::span<const TensorMap> deltas,
                                              std::span<const MaterializedTransform> transforms,
                                              size_t i) {
    std::vector<TensorMap> terms;
    terms.reserve(deltas.size() - 1);
    for (size_t j = 0; j < deltas.size(); ++j) {
        if (j == i) continue;
        terms.push_back(apply_inverse(transforms[i], apply(transforms[j], deltas[j])));
    }
    return terms;
}

double interference_norm_direct(std::span<const TensorMap> deltas,
                                std::span<const MaterializedTransform> transforms,
                                size_t task_index, double lambda) {
    validate_args(deltas.size(), transforms.size(), task_index);
    auto terms = retrieval_terms(deltas, transforms, task_index);
    if (terms.empty()) return 0.0;
    TensorMap sum = zeros_like(terms[0]);
    for (const auto& t : terms) {
        sum = axpy(1.0, t, sum);
    }
    return lambda * frobenius_norm(sum);
}

double interference_norm_expansion(std::span<const TensorMap> deltas,
                                   std::span<const MaterializedTransform> transforms,
                                   size_t task_index, double lambda) {
    validate_args(deltas.size(), transforms.size(), task_index);
    auto terms = retrieval_terms(deltas, transforms, task_index);
    if (terms.empty()) return 0.0;

    std::vector<double> norms;
    norms.reserve(terms.size());
    for (const auto& t : terms) norms.push_back(frobenius_norm(t));

    double sum_sq = 0.0;
    for (double n : norms) sum_sq += n * n;
    double cross = 0.0;
    for (size_t a = 0; a < terms.size(); ++a) {
        for (size_t b = a + 1; b < terms.size(); ++b) {
            if (norms[a] == 0.0 || norms[b] == 0.0) continue;
            cross += norms[a] * norms[b] * cosine(terms[a], terms[b]);
        }
    }
    double radicand = sum_sq + 2.0 * cross;
    if (radicand < 0.0) {
        // float error can push an exact zero slightly negative
        if (radicand >= -1e-9 * std::max(1.0, sum_sq)) {
            radicand = 0.0;
        } else {
            throw DegenerateInputError("interference expansion: negative radicand " +
                                       std::to_string(radicand));
        }
    }
    return lambda * std::sqrt(radicand);
}

// cosine over one tensor pair, 64-bit accumulation; nullopt for zero norms
static std::optional<double> tensor_cosine(const Tensor& a, const Tensor& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t k = 0; k < a.data.size(); ++k) {
        double x = a.data[k], y = b.data[k];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

PairwiseCosineStats pairwise_cosine_stats(std::span<const TensorMap> deltas,
                                          std::span<const MaterializedTransform> transforms,
                                          const ModelSchema* schema) {
    if (deltas.empty()) throw ConfigError("no deltas given");
    if (!transforms.empty() && transforms.size() != deltas.size()) {
        throw ConfigError("need one transform per delta");
    }

    std::vector<TensorMap> work;
    work.reserve(deltas.size());
    for (size_t i = 0; i < deltas.size(); ++i) {
        work.push_back(transforms.empty() ? deltas[i] : apply(transforms[i], deltas[i]));
    }

    const size_t n = work.size();
    PairwiseCosineStats stats;
    stats.matrix.assign(n, std::vector<std::optional<double>>(n));

    std::vector<double> norms(n);
    for (size_t i = 0; i < n; ++i) norms[i] = frobenius_norm(work[i]);

    double sum = 0.0, sum_abs = 0.0, max_abs = 0.0;
    size_t defined = 0;
    for (size_t i = 0; i < n; ++i) {
        if (norms[i] > 0.0) stats.matrix[i][i] = 1.0;
        for (size_t j = i + 1; j < n; ++j) {
            if (norms[i] == 0.0 || norms[j] == 0.0) continue;
            double c = std::clamp(dot(work[i], work[j]) / (norms[i] * norms[j]), -1.0, 1.0);
            stats.matrix[i][j] = c;
            stats.matrix[j][i] = c;
            sum += c;
            sum_abs += std::fabs(c);
            max_abs = std::max(max_abs, std::fabs(c));
            ++defined;
        }
    }
    stats.summary.defined_pairs = defined;
    if (defined > 0) {
        stats.summary.mean = sum / static_cast<double>(defined);
        stats.summary.mean_abs = sum_abs / static_cast<double>(defined);
        stats.summary.max_abs = max_abs;
    }

    if (schema != nullptr) {
        for (const auto& d : work) {
            for (const auto& [type, group] : schema->groups) {
                for (size_t a = 0; a < group.members.size(); ++a) {
                    if (!d.contains(group.members[a])) continue;
                    for (size_t b = a + 1; b < group.members.size(); ++b) {
                        if (!d.contains(group.members[b])) continue;
                        auto c = tensor_cosine(d.at(group.members[a]), d.at(group.members[b]));
                        if (c) stats.within_model.push_back(*c);
                    }
                }
            }
        }
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = i + 1; j < n; ++j) {
                for (const auto& layer : schema->layers) {
                    if (layer.io_class != IoClass::block) continue;
                    if (!work[i].contains(layer.name) || !work[j].contains(layer.name)) continue;
                    auto c = tensor_cosine(work[i].at(layer.name), work[j].at(layer.name));
                    if (c) stats.across_model.push_back(*c);
                }
            }
        }
    }
    return stats;
}

InterferenceReport analyze_task(std::span<const TensorMap> deltas,
                                std::span<const MaterializedTransform> transforms,
                                std::span<const std::string> task_ids, size_t task_index,
                                double lambda) {
    validate_args(deltas.size(), transforms.size(), task_index);
    if (task_ids.size() != deltas.size()) throw ConfigError("need one task id per delta");

    InterferenceReport rep;
    rep.task_id = task_ids[task_index];
    rep.lambda = lambda;
    rep.direct_norm = interference_norm_direct(deltas, transforms, task_index, lambda);
    rep.expansion_norm = interference_norm_expansion(deltas, transforms, task_index, lambda);

    // cosines of the per-task terms as seen while retrieving this task:
    // Oi^-1(Oj(delta_j)); the shared Oi^-1 keeps angles identical to the
    // transformed deltas but this is the literal retrieval-time view
    std::vector<TensorMap> view;
    view.reserve(deltas.size());
    for (size_t j = 0; j < deltas.size(); ++j) {
        view.push_back(apply_inverse(transforms[task_index], apply(transforms[j], deltas[j])));
    }
    auto stats = pairwise_cosine_stats(view);
    rep.mean_abs_cosine = stats.summary.mean_abs;
    rep.pairwise = std::move(stats.matrix);
    return rep;
}

static json matrix_to_json(const std::vector<std::vector<std::optional<double>>>& m) {
    json rows = json::array();
    for (const auto& row : m) {
        json r = json::array();
        for (const auto& v : row) {
            if (v) {
                r.push_back(*v);
            } else {
                r.push_back(nullptr);
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string reports_to_json(std::span<const InterferenceReport> reports,
                            const PairwiseCosineStats* raw_stats) {
    json out;
    json arr = json::array();
    for (const auto& r : reports) {
        arr.push_back({{"task_id", r.task_id},
                       {"lambda", r.lambda},
                       {"direct_norm", r.direct_norm},
                       {"expansion_norm", r.expansion_norm},
                       {"mean_abs_cosine", r.mean_abs_cosine},
                       {"pairwise", matrix_to_json(r.pairwise)}});
    }
    out["reports"] = std::move(arr);
    if (raw_stats != nullptr) {
        out["raw_pairwise"] = matrix_to_json(raw_stats->matrix);
        out["raw_summary"] = {{"mean", raw_stats->summary.mean},
                              {"mean_abs", raw_stats->summary.mean_abs},
                              {"max_abs", raw_stats->summary.max_abs},
                              {"defined_pairs", raw_stats->summary.defined_pairs}};
        out["within_model_cosines"] = raw_stats->within_model;
        out["across_model_cosines"] = raw_stats->across_model;
    }
    return out.dump(2) + "\n";
}

std::string pairwise_to_csv(const PairwiseCosineStats& stats,
                            std::span<const std::string> task_ids) {
    if (task_ids.size() != stats.matrix.size()) {
        throw ConfigError("need one task id per matrix row");
    }
    std::string out = "task_a,task_b,cosine\n";
    char buf[64];
    for (size_t i = 0; i < stats.matrix.size(); ++i) {
        for (size_t j = i + 1; j < stats.matrix.size(); ++j) {
            out += task_ids[i];
            out += ',';
            out += task_ids[j];
            out += ',';
            if (stats.matrix[i][j]) {
                snprintf(buf, sizeof(buf), "%.10g", *stats.matrix[i][j]);
                out += buf;
            }
            out += '\n';
        }
    }
    return out;
}

}  // namespace randes
