#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "randes/superposition.hpp"
#include "randes/tensor.hpp"

namespace randes {

// Multi-block dense network: input.embed, then per block a mixing matrix
// (blocks.k.attn.proj) and an mlp matrix (blocks.k.mlp.fc) with a tanh
// between blocks, then a linear output.head readout.
struct Architecture {
    int64_t blocks = 4;
    int64_t width = 32;
    int64_t input_dim = 16;
    int64_t output_dim = 4;
};

struct SyntheticTask {
    std::string task_id;
    int64_t input_dim = 0;
    int64_t output_dim = 0;
    int64_t n_train = 0;
    int64_t n_heldout = 0;
    std::vector<float> teacher;  // output_dim x input_dim
    std::vector<float> train_x, train_y;
    std::vector<float> heldout_x, heldout_y;
};

// Tasks are random linear teachers sharing a common component, so the
// fine-tuned deltas are related the way a family of fine-tunes of one
// pretrained model is.
struct SyntheticTaskSet {
    uint64_t seed = 0;
    Architecture arch;
    TensorMap base;
    std::vector<TensorMap> finetuned;
    std::vector<SyntheticTask> tasks;

    std::vector<std::string> task_ids() const;
    // Compression inputs over the fine-tuned checkpoints. Pointers alias
    // this object; keep it alive while they are used.
    std::vector<ModelInput> model_inputs() const;
};

// Deterministic: the same seed regenerates the same bits. Checkpoint
// weights are snapped to a 2^-12 grid, so deltas and base-plus-delta sums
// round-trip exactly in float32. Throws ConfigError for task_count < 1 or
// fewer than 2 blocks.
SyntheticTaskSet generate_tasks(uint64_t seed, int64_t task_count, Architecture arch = {});

// Random checkpoint with the harness layer layout and grid-snapped values;
// no training involved.
TensorMap random_lattice_checkpoint(const Architecture& arch, uint64_t seed, double scale = 0.25);

// Snaps every value to the 2^-12 grid, clamped to [-8, 8].
void snap_to_grid(TensorMap& map);

enum class EvalSlice { validation, test, all };

// Negative mean squared error of the model against the task's teacher on
// the chosen held-out slice (validation = first half, test = second half).
double evaluate(const TensorMap& model, const SyntheticTask& task,
                EvalSlice slice = EvalSlice::test);

enum class SweepAxis { lambda, mode, skip_rate, selector, context };

const char* to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct HarnessModeConfig {
    TransformMode mode = TransformMode::srsf;
    uint64_t global_seed = 0;
    double lambda = 1.0;
    TargetSelector selector;
};

struct SweepPoint {
    std::string setting;
    std::vector<double> per_task_metric;  // test slice, one per task
    double avg_metric = 0.0;              // validation average; argbest maximizes this
    double test_avg_metric = 0.0;
    double mean_abs_cosine = 0.0;         // over transformed deltas
    double interference_norm = 0.0;       // median direct norm across tasks
    int64_t selected_layers = 0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::lambda;
    std::vector<std::string> task_ids;
    std::vector<SweepPoint> points;
    size_t argbest_index = 0;

    const SweepPoint& argbest() const { return points.at(argbest_index); }
};

// One compression and retrieval per grid value. The grid must be nonempty,
// strictly increasing and inside (0, 2].
SweepResult grid_search_lambda(const SyntheticTaskSet& ts, const HarnessModeConfig& config,
                               std::span<const double> grid);

inline constexpr double kDefaultLambdaGrid[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

// Store seed used by the reference evaluation of a generated suite. The
// suite seed controls data and training; this controls the transforms.
inline constexpr uint64_t kReferenceStoreSeed = 38;

// Sweeps one axis while holding the rest of the config fixed. Settings are
// parsed per axis: transform modes, positive integers for skip_rate,
// selector names, or context names {rbd, identity, rd}.
SweepResult run_ablation(const SyntheticTaskSet& ts, SweepAxis axis,
                         std::span<const std::string> settings,
                         const HarnessModeConfig& config);

// Elementwise mean of the models.
TensorMap baseline_weight_averaging(std::span<const TensorMap> models);
// base + lambda * sum of deltas.
TensorMap baseline_task_arithmetic(const TensorMap& base, std::span<const TensorMap> models,
                                   double lambda);

std::string sweep_to_json(const SweepResult& result);
std::string sweep_to_csv(const SweepResult& result);

}  // namespace randes
