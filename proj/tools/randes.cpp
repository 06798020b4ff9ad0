// randes: store many fine-tuned checkpoints as one base + one superposed
// delta + per-task seeds, and get any of them back on demand.
//
// Exit codes: 0 ok, 2 structural mismatch, 3 I/O, 4 configuration,
// 5 integrity. Human-readable output goes to stderr; machine-readable JSON
// goes to stdout or to files. RANDES_LOG={debug,info,warn,quiet} controls
// stderr verbosity.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "randes/analysis.hpp"
#include "randes/checkpoint.hpp"
#include "randes/errors.hpp"
#include "randes/harness.hpp"
#include "randes/sha256.hpp"
#include "randes/superposition.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace randes;

namespace {

enum LogLevel { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

int log_level() {
    static int level = [] {
        const char* env = std::getenv("RANDES_LOG");
        std::string v = env ? env : "info";
        if (v == "quiet") return kQuiet;
        if (v == "warn") return kWarn;
        if (v == "debug") return kDebug;
        return kInfo;
    }();
    return level;
}

#define LOG_AT(level, ...)                  \
    do {                                    \
        if (log_level() >= (level)) {       \
            std::fprintf(stderr, __VA_ARGS__); \
            std::fprintf(stderr, "\n");     \
        }                                   \
    } while (0)
#define LOG_INFO(...) LOG_AT(kInfo, __VA_ARGS__)
#define LOG_WARN(...) LOG_AT(kWarn, __VA_ARGS__)
#define LOG_DEBUG(...) LOG_AT(kDebug, __VA_ARGS__)

constexpr int kExitOk = 0;
constexpr int kExitStructural = 2;
constexpr int kExitIo = 3;
constexpr int kExitConfig = 4;
constexpr int kExitIntegrity = 5;

// Best-effort advisory lock on a store directory; concurrent invocations
// against one store are the user's responsibility.
struct StoreLock {
    fs::path path;
    bool owned = false;

    explicit StoreLock(const fs::path& dir) : path(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (fs::exists(path)) {
            LOG_WARN("warning: %s exists; another invocation may be writing to this store",
                     path.string().c_str());
            return;
        }
        std::ofstream f(path);
        if (f) {
            f << "randes advisory lock\n";
            owned = true;
        }
    }
    ~StoreLock() {
        if (owned) {
            std::error_code ec;
            fs::remove(path, ec);
        }
    }
};

struct NamedPath {
    std::string id;
    fs::path path;
};

// --model values are id=path
NamedPath parse_named(const std::string& arg) {
    auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
        throw ConfigError("--model expects id=path, got '" + arg + "'");
    }
    return {arg.substr(0, eq), fs::path(arg.substr(eq + 1))};
}

void require_readable(const fs::path& p, const char* what) {
    if (!fs::exists(p)) {
        throw IoError(std::string(what) + " not found: " + p.string());
    }
}

TargetSelector make_selector(const std::string& selector, int64_t skip_rate) {
    TargetSelector s;
    s.mode = selector_mode_from_string(selector);
    s.skip_rate = skip_rate;
    return s;
}

void emit(const std::string& text) { std::fwrite(text.data(), 1, text.size(), stdout); }

void write_text_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + p.string());
    f << text;
    if (!f) throw IoError("write failed: " + p.string());
}

// ---------------------------------------------------------------------------
// compress

struct CompressArgs {
    std::string base;
    std::vector<std::string> models;
    std::string out;
    std::string mode = "srsf";
    uint64_t seed = 0;
    double lambda = 1.0;
    std::string selector = "all";
    int64_t skip_rate = 1;
};

int cmd_compress(const CompressArgs& a) {
    require_readable(a.base, "base checkpoint");
    std::vector<NamedPath> named;
    for (const auto& m : a.models) named.push_back(parse_named(m));
    for (const auto& n : named) require_readable(n.path, "model checkpoint");

    TensorMap base = read_checkpoint(a.base);
    std::vector<TensorMap> weights;
    weights.reserve(named.size());
    for (const auto& n : named) weights.push_back(read_checkpoint(n.path));

    std::vector<ModelInput> inputs;
    for (size_t i = 0; i < named.size(); ++i) {
        ModelInput in;
        in.task_id = named[i].id;
        in.weights = &weights[i];
        inputs.push_back(std::move(in));
    }

    StoreConfig cfg;
    cfg.mode = transform_mode_from_string(a.mode);
    cfg.global_seed = a.seed;
    cfg.lambda = a.lambda;
    cfg.selector = make_selector(a.selector, a.skip_rate);

    std::string base_sha = sha256_hex(read_file_bytes(a.base));
    SuperpositionStore store = compress(base, inputs, cfg, base_sha);

    StoreLock lock(a.out);
    save_store(store, a.out);

    uintmax_t payload = fs::file_size(fs::path(a.out) / "multi_delta.rdck");
    uintmax_t manifest = fs::file_size(fs::path(a.out) / "manifest.json");
    json tasks = json::array();
    for (const auto& e : store.registry) {
        LOG_INFO("task %-16s delta_norm %.6f", e.task_id.c_str(), e.delta_norm);
        tasks.push_back({{"task_id", e.task_id}, {"delta_norm", e.delta_norm}});
    }
    LOG_INFO("store %s: payload %ju bytes, manifest %ju bytes", a.out.c_str(), payload,
             manifest);
    json out{{"store", a.out},
             {"tasks", tasks},
             {"payload_bytes", payload},
             {"manifest_bytes", manifest},
             {"total_bytes", payload + manifest}};
    emit(out.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// retrieve

struct RetrieveArgs {
    std::string store;
    std::string base;
    std::string task;
    std::string out;
};

int cmd_retrieve(const RetrieveArgs& a) {
    require_readable(a.store, "store directory");
    require_readable(a.base, "base checkpoint");

    SuperpositionStore store = load_store(a.store, a.base);
    auto t0 = std::chrono::steady_clock::now();
    TensorMap model = retrieve(store, a.task);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    write_checkpoint(model, a.out);
    LOG_INFO("retrieved '%s' in %.2f ms -> %s", a.task.c_str(), ms, a.out.c_str());

    json out{{"task_id", a.task},
             {"out", a.out},
             {"sha256", sha256_hex(read_file_bytes(a.out))}};
    emit(out.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// add / remove

struct SwapArgs {
    std::string store;
    std::string base;
    std::string model;  // id=path
    std::string task;   // remove: may stand alone
};

int cmd_add(const SwapArgs& a) {
    require_readable(a.store, "store directory");
    require_readable(a.base, "base checkpoint");
    NamedPath n = parse_named(a.model);
    require_readable(n.path, "model checkpoint");

    SuperpositionStore store = load_store(a.store, a.base);
    TensorMap weights = read_checkpoint(n.path);
    ModelInput in;
    in.task_id = n.id;
    in.weights = &weights;
    add_model(store, in);

    StoreLock lock(a.store);
    save_store(store, a.store);
    const TaskEntry& e = store.entry(n.id);
    LOG_INFO("added '%s' (model_index %llu, delta_norm %.6f)", n.id.c_str(),
             (unsigned long long)e.model_index, e.delta_norm);
    json out{{"task_id", n.id},
             {"model_index", e.model_index},
             {"delta_norm", e.delta_norm},
             {"tasks", store.registry.size()}};
    emit(out.dump(2) + "\n");
    return kExitOk;
}

int cmd_remove(const SwapArgs& a) {
    require_readable(a.store, "store directory");
    require_readable(a.base, "base checkpoint");
    std::string task_id = a.task;
    fs::path model_path;
    if (!a.model.empty()) {
        NamedPath n = parse_named(a.model);
        if (!task_id.empty() && task_id != n.id) {
            throw ConfigError("--task '" + task_id + "' does not match --model id '" + n.id +
                              "'");
        }
        task_id = n.id;
        model_path = n.path;
    }
    if (task_id.empty() || model_path.empty()) {
        throw ConfigError("remove needs --model id=path (the original checkpoint)");
    }
    require_readable(model_path, "model checkpoint");

    SuperpositionStore store = load_store(a.store, a.base);
    TensorMap weights = read_checkpoint(model_path);
    remove_model(store, task_id, weights);

    StoreLock lock(a.store);
    save_store(store, a.store);
    LOG_INFO("removed '%s' (%zu tasks remain)", task_id.c_str(), store.registry.size());
    json out{{"task_id", task_id}, {"tasks", store.registry.size()}};
    emit(out.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::string store;  // optional: config + registry come from here
    std::string base;
    std::vector<std::string> models;
    std::string out;  // optional dir for analysis.json/analysis.csv
    std::string mode = "srsf";
    uint64_t seed = 0;
    double lambda = 1.0;
    std::string selector = "all";
    int64_t skip_rate = 1;
};

int cmd_analyze(const AnalyzeArgs& a) {
    require_readable(a.base, "base checkpoint");
    std::vector<NamedPath> named;
    for (const auto& m : a.models) named.push_back(parse_named(m));
    if (named.empty()) throw ConfigError("analyze needs at least one --model id=path");
    for (const auto& n : named) require_readable(n.path, "model checkpoint");

    TensorMap base = read_checkpoint(a.base);

    StoreConfig cfg;
    std::vector<std::pair<std::string, uint64_t>> order;  // task_id, model_index
    if (!a.store.empty()) {
        require_readable(a.store, "store directory");
        SuperpositionStore store = load_store(a.store, a.base);
        cfg = store.config;
        for (const auto& n : named) {
            order.emplace_back(n.id, store.entry(n.id).model_index);
        }
    } else {
        cfg.mode = transform_mode_from_string(a.mode);
        cfg.global_seed = a.seed;
        cfg.lambda = a.lambda;
        cfg.selector = make_selector(a.selector, a.skip_rate);
        for (size_t i = 0; i < named.size(); ++i) {
            order.emplace_back(named[i].id, static_cast<uint64_t>(i));
        }
    }

    ModelSchema schema = parse_schema(base, cfg.naming);
    std::vector<TensorMap> deltas;
    std::vector<MaterializedTransform> transforms;
    std::vector<std::string> ids;
    for (size_t i = 0; i < named.size(); ++i) {
        TensorMap weights = read_checkpoint(named[i].path);
        ModelInput in;
        in.task_id = named[i].id;
        in.weights = &weights;
        deltas.push_back(compute_delta(base, in));
        TransformSpec spec;
        spec.mode = cfg.mode;
        spec.global_seed = cfg.global_seed;
        spec.model_index = order[i].second;
        spec.selector = cfg.selector;
        transforms.push_back(materialize(spec, schema));
        ids.push_back(named[i].id);
    }

    std::vector<InterferenceReport> reports;
    for (size_t i = 0; i < deltas.size(); ++i) {
        reports.push_back(analyze_task(deltas, transforms, ids, i, cfg.lambda));
    }
    PairwiseCosineStats raw = pairwise_cosine_stats(deltas, {}, &schema);

    std::string json_text = reports_to_json(reports, &raw);
    std::string csv_text = pairwise_to_csv(raw, ids);
    emit(json_text);
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_text_file(fs::path(a.out) / "analysis.json", json_text);
        write_text_file(fs::path(a.out) / "analysis.csv", csv_text);
        LOG_INFO("wrote %s/analysis.json and analysis.csv", a.out.c_str());
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
    std::string config;  // JSON file; flags below fill a default config
    std::string out = ".";
    std::string axis = "lambda";
    std::string grid;  // "a:b:step"
    uint64_t seed = 42;
    std::string mode = "srsf";
    std::string selector = "all";
    int64_t skip_rate = 1;
};

std::vector<double> parse_grid(const std::string& spec) {
    double a = 0, b = 0, step = 0;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &a, &b, &step) != 3 || step <= 0) {
        throw ConfigError("--grid expects a:b:step with step > 0, got '" + spec + "'");
    }
    std::vector<double> grid;
    // half-step slack so the endpoint is kept despite rounding
    for (double v = a; v <= b + step * 0.5; v += step) grid.push_back(v);
    if (grid.empty()) throw ConfigError("empty grid from '" + spec + "'");
    return grid;
}

json load_json_file(const fs::path& p) {
    require_readable(p, "config file");
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open: " + p.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("bad JSON in " + p.string() + ": " + e.what());
    }
}

int cmd_sweep(const SweepArgs& a) {
    // assemble the effective config: file first, flags as defaults
    json cfg = json::object();
    if (!a.config.empty()) cfg = load_json_file(a.config);

    uint64_t suite_seed = cfg.value("suite_seed", a.seed);
    int64_t task_count = cfg.value("tasks", int64_t{8});
    Architecture arch;
    arch.blocks = cfg.value("blocks", arch.blocks);
    arch.width = cfg.value("width", arch.width);
    arch.input_dim = cfg.value("input_dim", arch.input_dim);
    arch.output_dim = cfg.value("output_dim", arch.output_dim);

    std::string axis_name = cfg.value("axis", a.axis);
    SweepAxis axis = sweep_axis_from_string(axis_name);

    HarnessModeConfig hc;
    hc.mode = transform_mode_from_string(cfg.value("mode", a.mode));
    hc.global_seed = cfg.value("store_seed", kReferenceStoreSeed);
    hc.selector = make_selector(cfg.value("selector", a.selector),
                                cfg.value("skip_rate", a.skip_rate));

    LOG_INFO("generating suite (seed %llu, %lld tasks)...", (unsigned long long)suite_seed,
             (long long)task_count);
    SyntheticTaskSet ts = generate_tasks(suite_seed, task_count, arch);

    std::vector<std::string> settings;
    if (cfg.contains("settings")) {
        for (const auto& s : cfg["settings"]) {
            settings.push_back(s.is_string() ? s.get<std::string>() : s.dump());
        }
    }

    SweepResult result;
    if (axis == SweepAxis::lambda) {
        std::vector<double> grid;
        if (!a.grid.empty()) {
            grid = parse_grid(a.grid);
        } else if (!settings.empty()) {
            for (const auto& s : settings) grid.push_back(std::stod(s));
        } else {
            grid.assign(std::begin(kDefaultLambdaGrid), std::end(kDefaultLambdaGrid));
        }
        result = grid_search_lambda(ts, hc, grid);
    } else {
        if (settings.empty()) {
            if (axis == SweepAxis::mode) {
                settings = {"identity", "shuffle", "shift", "rsf", "srsf", "rd"};
            } else if (axis == SweepAxis::skip_rate) {
                settings = {"1", "2", "3", "4"};
            } else if (axis == SweepAxis::selector) {
                settings = {"all", "mlp", "attn"};
            } else {
                settings = {"rbd", "identity", "rd"};
            }
        }
        // fixed lambda for the whole axis: a number, or the validation
        // argbest of an srsf grid search when not pinned
        if (cfg.contains("lambda") && cfg["lambda"].is_number()) {
            hc.lambda = cfg["lambda"].get<double>();
        } else {
            HarnessModeConfig probe = hc;
            probe.mode = TransformMode::srsf;
            SweepResult lam = grid_search_lambda(ts, probe, kDefaultLambdaGrid);
            hc.lambda = std::stod(lam.argbest().setting);
            LOG_INFO("lambda not pinned; using srsf argbest %.3g", hc.lambda);
        }
        result = run_ablation(ts, axis, settings, hc);
    }

    fs::create_directories(a.out);
    std::string json_text = sweep_to_json(result);
    write_text_file(fs::path(a.out) / "sweep.json", json_text);
    write_text_file(fs::path(a.out) / "sweep.csv", sweep_to_csv(result));
    LOG_INFO("wrote %s/sweep.json and sweep.csv (argbest %s)", a.out.c_str(),
             result.argbest().setting.c_str());
    emit(json_text);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"superposed delta checkpoint store"};
    app.set_version_flag("--version", "randes 1.0.0");
    app.require_subcommand(1);

    CompressArgs ca;
    auto* compress = app.add_subcommand("compress", "fold fine-tuned models into one store");
    compress->add_option("--base", ca.base, "base checkpoint (.rdck)")->required();
    compress->add_option("--model", ca.models, "fine-tuned model as id=path (repeatable)")
        ->required();
    compress->add_option("--out,--store", ca.out, "output store directory")->required();
    compress->add_option("--mode", ca.mode, "identity|shuffle|shift|rsf|srsf|rd");
    compress->add_option("--seed", ca.seed, "global transform seed");
    compress->add_option("--lambda", ca.lambda, "merging coefficient in (0,2]");
    compress->add_option("--selector", ca.selector, "all|mlp|attn");
    compress->add_option("--skip-rate", ca.skip_rate, "randomize every k-th layer");

    RetrieveArgs ra;
    auto* retrieve = app.add_subcommand("retrieve", "reconstruct one model from a store");
    retrieve->add_option("--store", ra.store, "store directory")->required();
    retrieve->add_option("--base", ra.base, "base checkpoint")->required();
    retrieve->add_option("--task", ra.task, "task id")->required();
    retrieve->add_option("--out", ra.out, "output checkpoint path")->required();

    SwapArgs aa;
    auto* add = app.add_subcommand("add", "fold one more model into a store");
    add->add_option("--store", aa.store, "store directory")->required();
    add->add_option("--base", aa.base, "base checkpoint")->required();
    add->add_option("--model", aa.model, "model as id=path")->required();

    SwapArgs rma;
    auto* remove = app.add_subcommand("remove", "subtract one model from a store");
    remove->add_option("--store", rma.store, "store directory")->required();
    remove->add_option("--base", rma.base, "base checkpoint")->required();
    remove->add_option("--model", rma.model, "original model as id=path")->required();
    remove->add_option("--task", rma.task, "task id (defaults to the --model id)");

    AnalyzeArgs na;
    auto* analyze = app.add_subcommand("analyze", "interference and cosine reports");
    analyze->add_option("--base", na.base, "base checkpoint")->required();
    analyze->add_option("--model", na.models, "model as id=path (repeatable)")->required();
    analyze->add_option("--store", na.store, "store directory (config + indices from here)");
    analyze->add_option("--out", na.out, "directory for analysis.json/analysis.csv");
    analyze->add_option("--mode", na.mode, "identity|shuffle|shift|rsf|srsf|rd");
    analyze->add_option("--seed", na.seed, "global transform seed");
    analyze->add_option("--lambda", na.lambda, "merging coefficient");
    analyze->add_option("--selector", na.selector, "all|mlp|attn");
    analyze->add_option("--skip-rate", na.skip_rate, "randomize every k-th layer");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "synthetic-suite ablation sweeps");
    sweep->add_option("--config", sa.config, "JSON sweep config");
    sweep->add_option("--out", sa.out, "output directory (default .)");
    sweep->add_option("--axis", sa.axis, "lambda|mode|skip_rate|selector|context");
    sweep->add_option("--grid", sa.grid, "lambda grid as a:b:step");
    sweep->add_option("--seed", sa.seed, "suite seed");
    sweep->add_option("--mode", sa.mode, "store transform mode");
    sweep->add_option("--selector", sa.selector, "all|mlp|attn");
    sweep->add_option("--skip-rate", sa.skip_rate, "randomize every k-th layer");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }

    try {
        if (compress->parsed()) return cmd_compress(ca);
        if (retrieve->parsed()) return cmd_retrieve(ra);
        if (add->parsed()) return cmd_add(aa);
        if (remove->parsed()) return cmd_remove(rma);
        if (analyze->parsed()) return cmd_analyze(na);
        if (sweep->parsed()) return cmd_sweep(sa);
    } catch (const StructuralMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStructural;
    } catch (const SchemaError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStructural;
    } catch (const IntegrityError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIntegrity;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const Error& e) {
        // config, invalid spec, unknown task, degeneracy
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
