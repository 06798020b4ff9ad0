#include "randes/schema.hpp"

#include <regex>

#include "randes/errors.hpp"

namespace randes {

const char* to_string(IoClass c) {
    switch (c) {
        case IoClass::input: return "input";
        case IoClass::output: return "output";
        case IoClass::block: return "block";
    }
    return "?";
}

const char* to_string(SelectorMode m) {
    switch (m) {
        case SelectorMode::all: return "all";
        case SelectorMode::mlp: return "mlp";
        case SelectorMode::attn: return "attn";
        case SelectorMode::custom: return "custom";
    }
    return "?";
}

SelectorMode selector_mode_from_string(const std::string& s) {
    if (s == "all") return SelectorMode::all;
    if (s == "mlp") return SelectorMode::mlp;
    if (s == "attn") return SelectorMode::attn;
    if (s == "custom") return SelectorMode::custom;
    throw ConfigError("unknown selector mode '" + s + "'");
}

const LayerId& ModelSchema::layer(const std::string& name) const {
    for (const auto& l : layers) {
        if (l.name == name) return l;
    }
    throw SchemaError("layer '" + name + "' not in schema");
}

static std::regex compile_pattern(const std::string& pattern) {
    try {
        return std::regex(pattern);
    } catch (const std::regex_error& e) {
        throw ConfigError("bad naming pattern '" + pattern + "': " + e.what());
    }
}

ModelSchema parse_schema(const TensorMap& checkpoint, const NamingConvention& convention) {
    std::regex block_re = compile_pattern(convention.block_pattern);
    if (block_re.mark_count() < 2) {
        throw ConfigError("block_pattern needs two capture groups (index, type)");
    }
    std::vector<std::regex> input_res, output_res;
    for (const auto& p : convention.input_patterns) input_res.push_back(compile_pattern(p));
    for (const auto& p : convention.output_patterns) output_res.push_back(compile_pattern(p));

    ModelSchema schema;
    std::set<int64_t> block_indices;
    std::map<std::string, std::map<int64_t, std::string>> slots;  // type -> index -> name

    for (const auto& [name, tensor] : checkpoint.entries) {
        LayerId id;
        id.name = name;
        std::smatch m;
        if (std::regex_search(name, m, block_re)) {
            id.io_class = IoClass::block;
            try {
                id.block_index = std::stoll(m[1].str());
            } catch (const std::exception&) {
                throw SchemaError("layer '" + name + "': block index '" + m[1].str() +
                                  "' is not an integer");
            }
            id.layer_type = m[2].str();

            auto& slot = slots[id.layer_type];
            auto [it, fresh] = slot.emplace(*id.block_index, name);
            if (!fresh) {
                throw SchemaError("layers '" + it->second + "' and '" + name +
                                  "' both resolve to block " + std::to_string(*id.block_index) +
                                  " type '" + id.layer_type + "'");
            }
            block_indices.insert(*id.block_index);
        } else {
            bool is_input = false;
            for (const auto& re : input_res) {
                if (std::regex_search(name, re)) {
                    is_input = true;
                    break;
                }
            }
            id.io_class = is_input ? IoClass::input : IoClass::output;
        }
        schema.layers.push_back(std::move(id));
    }

    for (const auto& [type, slot] : slots) {
        LayerGroup group;
        group.layer_type = type;
        for (const auto& [index, name] : slot) {
            const Tensor& t = checkpoint.at(name);
            if (group.members.empty()) {
                group.shape = t.shape;
            } else if (t.shape != group.shape) {
                std::string listing;
                for (const auto& [_, n] : slot) listing += " '" + n + "'";
                throw SchemaError("group '" + type + "' mixes shapes across:" + listing);
            }
            group.members.push_back(name);
            group.block_indices.push_back(index);
        }
        schema.selector_universe.insert(type);
        schema.groups.emplace(type, std::move(group));
    }
    schema.block_count = static_cast<int64_t>(block_indices.size());
    schema.mlp_substring = convention.mlp_substring;
    schema.attn_substring = convention.attn_substring;
    return schema;
}

static bool type_matches(const std::string& layer_type, const TargetSelector& selector,
                         const ModelSchema& schema) {
    switch (selector.mode) {
        case SelectorMode::all:
            return true;
        case SelectorMode::mlp:
            return layer_type.find(schema.mlp_substring) != std::string::npos;
        case SelectorMode::attn:
            return layer_type.find(schema.attn_substring) != std::string::npos;
        case SelectorMode::custom:
            for (const auto& p : selector.patterns) {
                if (layer_type.find(p) != std::string::npos) return true;
            }
            return false;
    }
    return false;
}

std::map<std::string, std::vector<size_t>> selected_positions(const ModelSchema& schema,
                                                              const TargetSelector& selector) {
    if (selector.skip_rate < 1) {
        throw ConfigError("skip_rate must be >= 1, got " + std::to_string(selector.skip_rate));
    }
    std::map<std::string, std::vector<size_t>> out;
    for (const auto& [type, group] : schema.groups) {
        if (!type_matches(type, selector, schema)) continue;
        std::vector<size_t> positions;
        for (size_t p = 0; p < group.members.size(); p += static_cast<size_t>(selector.skip_rate)) {
            positions.push_back(p);
        }
        out.emplace(type, std::move(positions));
    }
    return out;
}

TargetSelection select_targets(const ModelSchema& schema, const TargetSelector& selector) {
    TargetSelection sel;
    auto positions = selected_positions(schema, selector);
    for (const auto& [type, pos] : positions) {
        const LayerGroup& group = schema.groups.at(type);
        for (size_t p : pos) sel.names.push_back(group.members[p]);
    }
    sel.empty_warning = positions.empty() && !schema.groups.empty();
    return sel;
}

}  // namespace randes
