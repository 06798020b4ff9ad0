#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "randes/schema.hpp"
#include "randes/tensor.hpp"

namespace randes {

// identity  no-op
// shuffle   random permutation of same-type layers across blocks
// shift     deterministic move of each layer one block deeper, wrapping
// rsf       random column-wise sign flips per layer
// srsf      shuffle followed by rsf
// rd        random normal diagonal per column; NOT norm preserving, kept
//           as a contrast case, inverse divides by the diagonal
enum class TransformMode { identity, shuffle, shift, rsf, srsf, rd };

const char* to_string(TransformMode m);
// Accepts exactly the six names above; composite strings like "srsf+rd"
// are rejected.
TransformMode transform_mode_from_string(const std::string& s);

bool mode_is_orthogonal(TransformMode m);

struct TransformSpec {
    TransformMode mode = TransformMode::srsf;
    uint64_t global_seed = 0;
    uint64_t model_index = 0;
    TargetSelector selector;

    uint64_t effective_seed() const { return global_seed + model_index; }
};

// Gather permutation over the selected members of one group:
// output[layers[p]] takes input[layers[gather[p]]].
struct GroupPermutation {
    std::vector<std::string> layers;
    std::vector<uint32_t> gather;
};

struct MaterializedTransform {
    TransformMode mode = TransformMode::identity;
    std::map<std::string, GroupPermutation> perms;    // layer_type -> permutation
    std::map<std::string, std::vector<float>> signs;  // layer_name -> per-column +-1
    std::map<std::string, std::vector<float>> diags;  // layer_name -> per-column scale
};

// Draws all randomness for one model's transform. Streams are keyed by
// (effective seed, layer type) for permutations and (effective seed, layer
// name) for per-layer vectors, so adding or removing one group never
// perturbs the draws of another.
MaterializedTransform materialize(const TransformSpec& spec, const ModelSchema& schema);

// Applies the transform: permutations move whole tensors between same-type
// layers, then per-column vectors scale each layer in place. Layers the
// transform does not mention pass through untouched. Throws
// StructuralMismatchError if the input lacks a layer the transform needs.
TensorMap apply(const MaterializedTransform& t, const TensorMap& x);

// Exact inverse of apply for the orthogonal modes; for rd it divides by
// the diagonal and throws NumericalDegeneracyError if an entry's magnitude
// is below 1e-12.
TensorMap apply_inverse(const MaterializedTransform& t, const TensorMap& x);

}  // namespace randes
