#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "randes/schema.hpp"
#include "randes/tensor.hpp"
#include "randes/transform.hpp"

namespace randes {

inline constexpr int kStoreFormatVersion = 1;

enum class SourceKind { full_finetune, lora };

const char* to_string(SourceKind k);
SourceKind source_kind_from_string(const std::string& s);

struct ModelInput {
    std::string task_id;
    const TensorMap* weights = nullptr;
    SourceKind kind = SourceKind::full_finetune;
    // densified delta is lora_scale * B * A
    double lora_scale = 1.0;
};

struct TaskEntry {
    std::string task_id;
    uint64_t model_index = 0;
    SourceKind source_kind = SourceKind::full_finetune;
    double lora_scale = 1.0;
    double delta_norm = 0.0;
};

struct StoreConfig {
    TransformMode mode = TransformMode::srsf;
    uint64_t global_seed = 0;
    double lambda = 1.0;
    TargetSelector selector;
    NamingConvention naming;
};

// One base checkpoint, one superposed delta, per-task seeds. Retrieval of
// task i applies the inverse of that task's transform to the shared delta,
// so the stored bytes stay constant no matter how many tasks are folded in.
struct SuperpositionStore {
    StoreConfig config;
    TensorMap base;
    TensorMap multi_delta;
    std::vector<TaskEntry> registry;
    ModelSchema schema;
    std::string base_sha256;
    int format_version = kStoreFormatVersion;
    int prng_version_used = 1;

    const TaskEntry& entry(std::string_view task_id) const;
    bool has_task(std::string_view task_id) const;
};

// Expands low-rank factors into a dense delta with the base's structure.
// Factors are named "<target>.lora_A" (r x cols) and "<target>.lora_B"
// (rows x r); every target must be a 2-D tensor of the base. Layers
// without factors get a zero delta.
TensorMap densify_lora(const TensorMap& base, const TensorMap& factors, double lora_scale);

// The per-task delta exactly as compression would compute it.
TensorMap compute_delta(const TensorMap& base, const ModelInput& model);

// Builds a store from scratch. Model i gets model_index i, so its
// transform seed is global_seed + i. If base_file_sha is given it is
// recorded as the base hash, otherwise the hash of the base's canonical
// serialization is used.
SuperpositionStore compress(const TensorMap& base, std::span<const ModelInput> models,
                            const StoreConfig& config,
                            std::optional<std::string> base_file_sha = std::nullopt);

// base + inverse-transformed multi delta. Tensors absent from the multi
// delta pass through from the base unchanged.
TensorMap retrieve(const SuperpositionStore& store, std::string_view task_id);

// Folds one more model in without touching existing contributions. The new
// task gets model_index max+1.
void add_model(SuperpositionStore& store, const ModelInput& model);

// Subtracts a task's contribution. The caller supplies the original model
// (full weights, or the factors for a lora task); its delta norm must
// match the recorded one to within 1e-4 relative or the call is refused.
void remove_model(SuperpositionStore& store, std::string_view task_id,
                  const TensorMap& original_weights);

// Store directory layout: multi_delta.rdck + manifest.json. The base
// checkpoint is referenced by hash only and never duplicated.
void save_store(const SuperpositionStore& store, const std::filesystem::path& dir);

// Loads a store; the base checkpoint file must hash to the recorded value.
SuperpositionStore load_store(const std::filesystem::path& dir,
                              const std::filesystem::path& base_checkpoint);

std::string manifest_to_json(const SuperpositionStore& store);

}  // namespace randes
