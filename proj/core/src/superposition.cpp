#include "randes/superposition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "randes/checkpoint.hpp"
#include "randes/errors.hpp"
#include "randes/rng.hpp"

namespace randes {

using nlohmann::json;

static constexpr const char* kDeltaFile = "multi_delta.rdck";
static constexpr const char* kManifestFile = "manifest.json";

const char* to_string(SourceKind k) {
    return k == SourceKind::lora ? "lora" : "full_finetune";
}

SourceKind source_kind_from_string(const std::string& s) {
    if (s == "full_finetune") return SourceKind::full_finetune;
    if (s == "lora") return SourceKind::lora;
    throw ConfigError("unknown source kind '" + s + "'");
}

const TaskEntry& SuperpositionStore::entry(std::string_view task_id) const {
    for (const auto& e : registry) {
        if (e.task_id == task_id) return e;
    }
    throw UnknownTaskError("task '" + std::string(task_id) + "' not in store");
}

bool SuperpositionStore::has_task(std::string_view task_id) const {
    for (const auto& e : registry) {
        if (e.task_id == task_id) return true;
    }
    return false;
}

static void validate_lambda(double lambda) {
    if (!(lambda > 0.0) || !(lambda <= 2.0) || !std::isfinite(lambda)) {
        throw ConfigError("lambda must be in (0, 2], got " + std::to_string(lambda));
    }
}

TensorMap densify_lora(const TensorMap& base, const TensorMap& factors, double lora_scale) {
    struct Pair {
        const Tensor* a = nullptr;
        const Tensor* b = nullptr;
    };
    std::map<std::string, Pair> pairs;
    for (const auto& [name, t] : factors.entries) {
        if (name.ends_with(".lora_A")) {
            pairs[name.substr(0, name.size() - 7)].a = &t;
        } else if (name.ends_with(".lora_B")) {
            pairs[name.substr(0, name.size() - 7)].b = &t;
        } else {
            throw StructuralMismatchError("tensor '" + name +
                                          "': not a LoRA factor (.lora_A/.lora_B)");
        }
    }

    TensorMap delta = zeros_like(base);
    for (const auto& [target, p] : pairs) {
        if (!p.a || !p.b) {
            throw StructuralMismatchError("tensor '" + target +
                                          "': LoRA pair is incomplete");
        }
        if (!base.contains(target)) {
            throw StructuralMismatchError("tensor '" + target +
                                          "': LoRA target not in base checkpoint");
        }
        const Tensor& w = base.at(target);
        if (w.rank() != 2 || p.a->rank() != 2 || p.b->rank() != 2) {
            throw StructuralMismatchError("tensor '" + target +
                                          "': LoRA factors need 2-D target and factors");
        }
        const int64_t rows = w.shape[0], cols = w.shape[1];
        const int64_t r = p.a->shape[0];
        if (p.a->shape[1] != cols || p.b->shape[0] != rows || p.b->shape[1] != r) {
            throw StructuralMismatchError(
                "tensor '" + target + "': LoRA factor shapes incompatible, A is [" +
                std::to_string(p.a->shape[0]) + "," + std::to_string(p.a->shape[1]) +
                "], B is [" + std::to_string(p.b->shape[0]) + "," +
                std::to_string(p.b->shape[1]) + "], target is [" + std::to_string(rows) +
                "," + std::to_string(cols) + "]");
        }
        Tensor& out = delta.at(target);
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < cols; ++j) {
                double acc = 0.0;
                for (int64_t k = 0; k < r; ++k) {
                    acc += static_cast<double>(p.b->at(i, k)) *
                           static_cast<double>(p.a->at(k, j));
                }
                out.at(i, j) = static_cast<float>(lora_scale * acc);
            }
        }
    }
    return delta;
}

TensorMap compute_delta(const TensorMap& base, const ModelInput& model) {
    if (model.weights == nullptr) {
        throw ConfigError("task '" + model.task_id + "': missing weights");
    }
    if (model.kind == SourceKind::lora) {
        return densify_lora(base, *model.weights, model.lora_scale);
    }
    return sub(*model.weights, base);
}

static TransformSpec spec_for(const SuperpositionStore& store, uint64_t model_index) {
    TransformSpec spec;
    spec.mode = store.config.mode;
    spec.global_seed = store.config.global_seed;
    spec.model_index = model_index;
    spec.selector = store.config.selector;
    return spec;
}

// multi_delta += lambda * O_i(delta)
static void accumulate(SuperpositionStore& store, const TensorMap& delta, uint64_t model_index,
                       double sign) {
    MaterializedTransform t = materialize(spec_for(store, model_index), store.schema);
    TensorMap transformed = apply(t, delta);
    store.multi_delta = axpy(sign * store.config.lambda, transformed, store.multi_delta);
}

SuperpositionStore compress(const TensorMap& base, std::span<const ModelInput> models,
                            const StoreConfig& config,
                            std::optional<std::string> base_file_sha) {
    validate_lambda(config.lambda);
    if (base.empty()) throw ConfigError("base checkpoint has no tensors");

    std::set<std::string> ids;
    for (const auto& m : models) {
        if (m.task_id.empty()) throw ConfigError("empty task id");
        if (!ids.insert(m.task_id).second) {
            throw ConfigError("duplicate task id '" + m.task_id + "'");
        }
    }

    SuperpositionStore store;
    store.config = config;
    store.base = base;
    store.schema = parse_schema(base, config.naming);
    store.multi_delta = zeros_like(base);
    store.base_sha256 = base_file_sha ? *base_file_sha : checkpoint_digest(base);

    for (size_t i = 0; i < models.size(); ++i) {
        const ModelInput& m = models[i];
        TensorMap delta = compute_delta(base, m);
        TaskEntry e;
        e.task_id = m.task_id;
        e.model_index = static_cast<uint64_t>(i);
        e.source_kind = m.kind;
        e.lora_scale = m.kind == SourceKind::lora ? m.lora_scale : 1.0;
        e.delta_norm = frobenius_norm(delta);
        accumulate(store, delta, e.model_index, +1.0);
        store.registry.push_back(std::move(e));
    }
    return store;
}

TensorMap retrieve(const SuperpositionStore& store, std::string_view task_id) {
    const TaskEntry& e = store.entry(task_id);
    MaterializedTransform t = materialize(spec_for(store, e.model_index), store.schema);
    TensorMap inv = apply_inverse(t, store.multi_delta);

    TensorMap out = store.base;
    for (const auto& [name, d] : inv.entries) {
        Tensor& target = out.at(name);
        if (!target.same_shape(d)) {
            throw StructuralMismatchError("retrieve: tensor '" + name + "' shape mismatch");
        }
        for (size_t k = 0; k < d.data.size(); ++k) {
            target.data[k] += d.data[k];
        }
    }
    return out;
}

void add_model(SuperpositionStore& store, const ModelInput& model) {
    if (model.task_id.empty()) throw ConfigError("empty task id");
    if (store.has_task(model.task_id)) {
        throw ConfigError("duplicate task id '" + model.task_id + "'");
    }
    uint64_t index = 0;
    for (const auto& e : store.registry) index = std::max(index, e.model_index + 1);

    TensorMap delta = compute_delta(store.base, model);
    TaskEntry e;
    e.task_id = model.task_id;
    e.model_index = index;
    e.source_kind = model.kind;
    e.lora_scale = model.kind == SourceKind::lora ? model.lora_scale : 1.0;
    e.delta_norm = frobenius_norm(delta);
    accumulate(store, delta, index, +1.0);
    store.registry.push_back(std::move(e));
}

void remove_model(SuperpositionStore& store, std::string_view task_id,
                  const TensorMap& original_weights) {
    const TaskEntry& e = store.entry(task_id);

    ModelInput m;
    m.task_id = e.task_id;
    m.weights = &original_weights;
    m.kind = e.source_kind;
    m.lora_scale = e.lora_scale;
    TensorMap delta = compute_delta(store.base, m);

    double norm = frobenius_norm(delta);
    double tol = 1e-4 * std::max({e.delta_norm, norm, 1e-12});
    if (std::fabs(norm - e.delta_norm) > tol) {
        throw IntegrityError("task '" + std::string(task_id) + "': supplied checkpoint delta norm " +
                             std::to_string(norm) + " does not match recorded " +
                             std::to_string(e.delta_norm));
    }

    accumulate(store, delta, e.model_index, -1.0);
    store.registry.erase(std::find_if(store.registry.begin(), store.registry.end(),
                                      [&](const TaskEntry& x) { return x.task_id == task_id; }));
}

// ---------------------------------------------------------------------------
// persistence

static json selector_to_json(const TargetSelector& s) {
    return json{{"mode", to_string(s.mode)}, {"patterns", s.patterns}, {"skip_rate", s.skip_rate}};
}

static TargetSelector selector_from_json(const json& j) {
    TargetSelector s;
    s.mode = selector_mode_from_string(j.at("mode").get<std::string>());
    s.patterns = j.at("patterns").get<std::vector<std::string>>();
    s.skip_rate = j.at("skip_rate").get<int64_t>();
    return s;
}

static json naming_to_json(const NamingConvention& n) {
    return json{{"block_pattern", n.block_pattern},
                {"input_patterns", n.input_patterns},
                {"output_patterns", n.output_patterns},
                {"mlp_substring", n.mlp_substring},
                {"attn_substring", n.attn_substring}};
}

static NamingConvention naming_from_json(const json& j) {
    NamingConvention n;
    n.block_pattern = j.at("block_pattern").get<std::string>();
    n.input_patterns = j.at("input_patterns").get<std::vector<std::string>>();
    n.output_patterns = j.at("output_patterns").get<std::vector<std::string>>();
    n.mlp_substring = j.at("mlp_substring").get<std::string>();
    n.attn_substring = j.at("attn_substring").get<std::string>();
    return n;
}

std::string manifest_to_json(const SuperpositionStore& store) {
    json tasks = json::array();
    for (const auto& e : store.registry) {
        tasks.push_back({{"task_id", e.task_id},
                         {"model_index", e.model_index},
                         {"source_kind", to_string(e.source_kind)},
                         {"lora_scale", e.lora_scale},
                         {"delta_norm", e.delta_norm}});
    }
    json m{{"format_version", store.format_version},
           {"prng_version", store.prng_version_used},
           {"lambda", store.config.lambda},
           {"mode", to_string(store.config.mode)},
           {"global_seed", store.config.global_seed},
           {"selector", selector_to_json(store.config.selector)},
           {"naming_convention", naming_to_json(store.config.naming)},
           {"base_sha256", store.base_sha256},
           {"tasks", tasks}};
    return m.dump(2) + "\n";
}

// temp file plus rename, so readers never observe a half-written manifest
static void write_manifest_atomic(const SuperpositionStore& store,
                                  const std::filesystem::path& dir) {
    std::string text = manifest_to_json(store);
    std::filesystem::path tmp = dir / (std::string(kManifestFile) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dir / kManifestFile, ec);
    if (ec) throw IoError("cannot replace manifest in '" + dir.string() + "': " + ec.message());
}

void save_store(const SuperpositionStore& store, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create store directory '" + dir.string() + "': " + ec.message());
    write_checkpoint(store.multi_delta, dir / kDeltaFile);
    write_manifest_atomic(store, dir);
}

SuperpositionStore load_store(const std::filesystem::path& dir,
                              const std::filesystem::path& base_checkpoint) {
    std::filesystem::path manifest_path = dir / kManifestFile;
    auto manifest_bytes = read_file_bytes(manifest_path);
    json m;
    try {
        m = json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const json::exception& e) {
        throw IntegrityError("manifest '" + manifest_path.string() + "' is not valid JSON: " +
                             e.what());
    }

    SuperpositionStore store;
    try {
        store.format_version = m.at("format_version").get<int>();
        if (store.format_version != kStoreFormatVersion) {
            throw IntegrityError("store format version " + std::to_string(store.format_version) +
                                 " unsupported");
        }
        store.prng_version_used = m.at("prng_version").get<int>();
        if (store.prng_version_used != kPrngVersion) {
            throw IntegrityError("prng version " + std::to_string(store.prng_version_used) +
                                 " unsupported");
        }
        store.config.lambda = m.at("lambda").get<double>();
        store.config.mode = transform_mode_from_string(m.at("mode").get<std::string>());
        store.config.global_seed = m.at("global_seed").get<uint64_t>();
        store.config.selector = selector_from_json(m.at("selector"));
        store.config.naming = naming_from_json(m.at("naming_convention"));
        store.base_sha256 = m.at("base_sha256").get<std::string>();
        for (const auto& t : m.at("tasks")) {
            TaskEntry e;
            e.task_id = t.at("task_id").get<std::string>();
            e.model_index = t.at("model_index").get<uint64_t>();
            e.source_kind = source_kind_from_string(t.at("source_kind").get<std::string>());
            e.lora_scale = t.at("lora_scale").get<double>();
            e.delta_norm = t.at("delta_norm").get<double>();
            store.registry.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw IntegrityError("manifest '" + manifest_path.string() + "' malformed: " + e.what());
    }
    validate_lambda(store.config.lambda);

    std::string actual = file_digest(base_checkpoint);
    if (actual != store.base_sha256) {
        throw IntegrityError("base checkpoint '" + base_checkpoint.string() +
                             "' hash " + actual + " does not match recorded " + store.base_sha256);
    }

    store.base = read_checkpoint(base_checkpoint);
    store.multi_delta = read_checkpoint(dir / kDeltaFile);
    store.schema = parse_schema(store.base, store.config.naming);

    for (const auto& [name, t] : store.multi_delta.entries) {
        if (!store.base.contains(name) || !store.base.at(name).same_shape(t)) {
            throw IntegrityError("store delta tensor '" + name +
                                 "' does not match the base checkpoint structure");
        }
    }
    return store;
}

}  // namespace randes
