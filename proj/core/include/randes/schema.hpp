#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "randes/tensor.hpp"

namespace randes {

enum class IoClass { input, output, block };

const char* to_string(IoClass c);

// Rules for organizing checkpoint tensor names into repeated blocks.
//
// block_pattern must contain two capture groups: the block index and the
// layer type. Names matching none of the patterns are classified as output
// layers and never participate in transforms.
struct NamingConvention {
    std::string block_pattern = R"(^blocks\.(\d+)\.(.+)$)";
    std::vector<std::string> input_patterns = {R"(^input\.)"};
    std::vector<std::string> output_patterns = {R"(^output\.)"};
    std::string mlp_substring = "mlp";
    std::string attn_substring = "attn";

    bool operator==(const NamingConvention&) const = default;
};

struct LayerId {
    std::string name;
    IoClass io_class = IoClass::output;
    // set only for block layers
    std::optional<int64_t> block_index;
    std::string layer_type;
};

// Same-type layers across blocks, ordered by ascending block index. All
// members share one shape, so their tensors are interchangeable.
struct LayerGroup {
    std::string layer_type;
    std::vector<std::string> members;
    std::vector<int64_t> block_indices;
    std::vector<int64_t> shape;
};

struct ModelSchema {
    std::vector<LayerId> layers;               // every tensor, lexicographic
    std::map<std::string, LayerGroup> groups;  // layer_type -> group
    int64_t block_count = 0;                   // distinct block indices
    std::set<std::string> selector_universe;   // selectable layer types
    std::string mlp_substring = "mlp";         // carried over from the convention
    std::string attn_substring = "attn";

    const LayerId& layer(const std::string& name) const;
};

// Classifies every tensor of the checkpoint. Throws SchemaError if two
// names resolve to the same (block, type) slot or if a group mixes shapes.
ModelSchema parse_schema(const TensorMap& checkpoint,
                         const NamingConvention& convention = {});

enum class SelectorMode { all, mlp, attn, custom };

const char* to_string(SelectorMode m);
SelectorMode selector_mode_from_string(const std::string& s);

struct TargetSelector {
    SelectorMode mode = SelectorMode::all;
    std::vector<std::string> patterns;  // custom mode: layer_type substrings
    int64_t skip_rate = 1;

    bool operator==(const TargetSelector&) const = default;
};

struct TargetSelection {
    // Selected layer names: groups in lexicographic type order, members in
    // ascending block order.
    std::vector<std::string> names;
    // True when the selector matched no layer type at all.
    bool empty_warning = false;
};

// Positions (indices into group.members) kept per group: every skip_rate-th
// member starting at position 0.
std::map<std::string, std::vector<size_t>> selected_positions(
    const ModelSchema& schema, const TargetSelector& selector);

TargetSelection select_targets(const ModelSchema& schema, const TargetSelector& selector);

}  // namespace randes
