#include "randes/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "randes/analysis.hpp"
#include "randes/errors.hpp"
#include "randes/rng.hpp"

namespace randes {

using nlohmann::json;

// generation constants; changing any of these changes every generated suite
namespace {
constexpr int64_t kTrainSamples = 512;
constexpr int64_t kHeldoutSamples = 256;
constexpr int kTrainSteps = 250;
constexpr double kLearningRate = 0.2;
constexpr double kGradClip = 1.0;  // global gradient norm bound, full-batch GD
// teacher_t = (shared + kTeacherSpread * own_t) / sqrt(1 + kTeacherSpread^2)
constexpr double kTeacherSpread = 1.0;
constexpr double kGridStep = 4096.0;  // 2^12
constexpr double kWeightClamp = 8.0;
}  // namespace

std::vector<std::string> SyntheticTaskSet::task_ids() const {
    std::vector<std::string> ids;
    ids.reserve(tasks.size());
    for (const auto& t : tasks) ids.push_back(t.task_id);
    return ids;
}

std::vector<ModelInput> SyntheticTaskSet::model_inputs() const {
    std::vector<ModelInput> inputs;
    inputs.reserve(tasks.size());
    for (size_t i = 0; i < tasks.size(); ++i) {
        ModelInput m;
        m.task_id = tasks[i].task_id;
        m.weights = &finetuned[i];
        m.kind = SourceKind::full_finetune;
        inputs.push_back(std::move(m));
    }
    return inputs;
}

void snap_to_grid(TensorMap& map) {
    for (auto& [_, t] : map.entries) {
        for (float& v : t.data) {
            double snapped = std::nearbyint(static_cast<double>(v) * kGridStep) / kGridStep;
            snapped = std::clamp(snapped, -kWeightClamp, kWeightClamp);
            // + 0.0 canonicalizes -0 so zero has a single bit pattern and
            // grid checkpoints can be compared bit for bit after a round trip
            v = static_cast<float>(snapped + 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// network

namespace {

struct Net {
    Architecture arch;
    std::vector<float> embed;               // width x input_dim
    std::vector<std::vector<float>> mix;    // per block, width x width
    std::vector<std::vector<float>> mlp;    // per block, width x width
    std::vector<float> head;                // output_dim x width
};

std::string block_name(int64_t k, const char* type) {
    return "blocks." + std::to_string(k) + "." + type;
}

Net net_from_map(const TensorMap& map, const Architecture& arch) {
    Net net;
    net.arch = arch;
    auto take = [&](const std::string& name, int64_t rows, int64_t cols) {
        const Tensor& t = map.at(name);
        if (t.rank() != 2 || t.shape[0] != rows || t.shape[1] != cols) {
            throw StructuralMismatchError("tensor '" + name + "': expected [" +
                                          std::to_string(rows) + "," + std::to_string(cols) +
                                          "]");
        }
        return t.data;
    };
    net.embed = take("input.embed", arch.width, arch.input_dim);
    for (int64_t k = 1; k <= arch.blocks; ++k) {
        net.mix.push_back(take(block_name(k, "attn.proj"), arch.width, arch.width));
        net.mlp.push_back(take(block_name(k, "mlp.fc"), arch.width, arch.width));
    }
    net.head = take("output.head", arch.output_dim, arch.width);
    return net;
}

TensorMap net_to_map(const Net& net) {
    TensorMap map;
    map.insert(Tensor("input.embed", {net.arch.width, net.arch.input_dim}, net.embed));
    for (int64_t k = 1; k <= net.arch.blocks; ++k) {
        map.insert(Tensor(block_name(k, "attn.proj"), {net.arch.width, net.arch.width},
                          net.mix[static_cast<size_t>(k - 1)]));
        map.insert(Tensor(block_name(k, "mlp.fc"), {net.arch.width, net.arch.width},
                          net.mlp[static_cast<size_t>(k - 1)]));
    }
    map.insert(Tensor("output.head", {net.arch.output_dim, net.arch.width}, net.head));
    return map;
}

// out[n x rows] = x[n x cols] * w[rows x cols]^T
void matmul_xwt(const float* x, const float* w, float* out, int64_t n, int64_t rows,
                int64_t cols) {
    for (int64_t i = 0; i < n; ++i) {
        const float* xi = x + i * cols;
        float* oi = out + i * rows;
        for (int64_t j = 0; j < rows; ++j) {
            const float* wj = w + j * cols;
            double acc = 0.0;
            for (int64_t k = 0; k < cols; ++k) {
                acc += static_cast<double>(xi[k]) * static_cast<double>(wj[k]);
            }
            oi[j] = static_cast<float>(acc);
        }
    }
}

// grad[rows x cols] += d[n x rows]^T * x[n x cols]
void accumulate_grad(const float* d, const float* x, float* grad, int64_t n, int64_t rows,
                     int64_t cols) {
    for (int64_t j = 0; j < rows; ++j) {
        for (int64_t k = 0; k < cols; ++k) {
            double acc = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                acc += static_cast<double>(d[i * rows + j]) * static_cast<double>(x[i * cols + k]);
            }
            grad[j * cols + k] = static_cast<float>(acc);
        }
    }
}

// out[n x cols] = d[n x rows] * w[rows x cols]
void matmul_xw(const float* d, const float* w, float* out, int64_t n, int64_t rows,
               int64_t cols) {
    for (int64_t i = 0; i < n; ++i) {
        const float* di = d + i * rows;
        float* oi = out + i * cols;
        for (int64_t k = 0; k < cols; ++k) oi[k] = 0.0f;
        for (int64_t j = 0; j < rows; ++j) {
            const float dj = di[j];
            const float* wj = w + j * cols;
            for (int64_t k = 0; k < cols; ++k) oi[k] += dj * wj[k];
        }
    }
}

struct ForwardState {
    // activations per stage, each n x width
    std::vector<std::vector<float>> hidden;  // hidden[0] = embed output
    std::vector<std::vector<float>> mix_out;
    std::vector<std::vector<float>> mlp_out;  // pre-nonlinearity
    std::vector<float> output;                // n x output_dim
};

void forward(const Net& net, const float* x, int64_t n, ForwardState& fs) {
    const int64_t w = net.arch.width;
    const int64_t K = net.arch.blocks;
    fs.hidden.assign(1, std::vector<float>(static_cast<size_t>(n * w)));
    fs.mix_out.assign(static_cast<size_t>(K), {});
    fs.mlp_out.assign(static_cast<size_t>(K), {});
    matmul_xwt(x, net.embed.data(), fs.hidden[0].data(), n, w, net.arch.input_dim);

    for (int64_t k = 0; k < K; ++k) {
        auto& mix_out = fs.mix_out[static_cast<size_t>(k)];
        auto& mlp_out = fs.mlp_out[static_cast<size_t>(k)];
        mix_out.resize(static_cast<size_t>(n * w));
        mlp_out.resize(static_cast<size_t>(n * w));
        matmul_xwt(fs.hidden.back().data(), net.mix[static_cast<size_t>(k)].data(),
                   mix_out.data(), n, w, w);
        matmul_xwt(mix_out.data(), net.mlp[static_cast<size_t>(k)].data(), mlp_out.data(), n, w,
                   w);
        std::vector<float> h = mlp_out;
        if (k + 1 < K) {
            for (float& v : h) v = std::tanh(v);
        }
        fs.hidden.push_back(std::move(h));
    }
    fs.output.resize(static_cast<size_t>(n * net.arch.output_dim));
    matmul_xwt(fs.hidden.back().data(), net.head.data(), fs.output.data(), n,
               net.arch.output_dim, w);
}

double mse(const std::vector<float>& pred, const std::vector<float>& target, int64_t offset,
           int64_t count) {
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        double d = static_cast<double>(pred[static_cast<size_t>(offset + i)]) -
                   static_cast<double>(target[static_cast<size_t>(offset + i)]);
        acc += d * d;
    }
    return acc / static_cast<double>(count);
}

void train_step(Net& net, const float* x, const float* y, int64_t n, double lr) {
    const int64_t w = net.arch.width;
    const int64_t K = net.arch.blocks;
    const int64_t dout = net.arch.output_dim;
    ForwardState fs;
    forward(net, x, n, fs);

    // d(loss)/d(output), loss = mean over all output entries
    std::vector<float> d_out(static_cast<size_t>(n * dout));
    const double scale = 2.0 / static_cast<double>(n * dout);
    for (size_t i = 0; i < d_out.size(); ++i) {
        d_out[i] = static_cast<float>(scale * (static_cast<double>(fs.output[i]) -
                                               static_cast<double>(y[i])));
    }

    std::vector<float> g_head(net.head.size());
    accumulate_grad(d_out.data(), fs.hidden.back().data(), g_head.data(), n, dout, w);
    std::vector<float> d_hidden(static_cast<size_t>(n * w));
    matmul_xw(d_out.data(), net.head.data(), d_hidden.data(), n, dout, w);

    std::vector<std::vector<float>> g_mix(static_cast<size_t>(K)), g_mlp(static_cast<size_t>(K));
    for (int64_t k = K - 1; k >= 0; --k) {
        // through the nonlinearity (blocks before the last one)
        if (k + 1 < K) {
            const auto& h = fs.hidden[static_cast<size_t>(k + 1)];
            for (size_t i = 0; i < d_hidden.size(); ++i) {
                d_hidden[i] *= 1.0f - h[i] * h[i];
            }
        }
        auto& gm = g_mlp[static_cast<size_t>(k)];
        gm.resize(static_cast<size_t>(w * w));
        accumulate_grad(d_hidden.data(), fs.mix_out[static_cast<size_t>(k)].data(), gm.data(), n,
                        w, w);
        std::vector<float> d_mix(static_cast<size_t>(n * w));
        matmul_xw(d_hidden.data(), net.mlp[static_cast<size_t>(k)].data(), d_mix.data(), n, w, w);

        auto& gx = g_mix[static_cast<size_t>(k)];
        gx.resize(static_cast<size_t>(w * w));
        accumulate_grad(d_mix.data(), fs.hidden[static_cast<size_t>(k)].data(), gx.data(), n, w,
                        w);
        matmul_xw(d_mix.data(), net.mix[static_cast<size_t>(k)].data(), d_hidden.data(), n, w, w);
    }
    std::vector<float> g_embed(net.embed.size());
    accumulate_grad(d_hidden.data(), x, g_embed.data(), n, w, net.arch.input_dim);

    // clip by global norm so no task diverges under the shared step size
    double norm_sq = 0.0;
    auto add_sq = [&](const std::vector<float>& g) {
        for (float v : g) norm_sq += static_cast<double>(v) * static_cast<double>(v);
    };
    add_sq(g_head);
    add_sq(g_embed);
    for (int64_t k = 0; k < K; ++k) {
        add_sq(g_mix[static_cast<size_t>(k)]);
        add_sq(g_mlp[static_cast<size_t>(k)]);
    }
    const double gnorm = std::sqrt(norm_sq);
    if (gnorm > kGradClip) lr *= kGradClip / gnorm;

    const float lrf = static_cast<float>(lr);
    for (size_t i = 0; i < net.head.size(); ++i) net.head[i] -= lrf * g_head[i];
    for (int64_t k = 0; k < K; ++k) {
        auto& mx = net.mix[static_cast<size_t>(k)];
        auto& ml = net.mlp[static_cast<size_t>(k)];
        for (size_t i = 0; i < mx.size(); ++i) mx[i] -= lrf * g_mix[static_cast<size_t>(k)][i];
        for (size_t i = 0; i < ml.size(); ++i) ml[i] -= lrf * g_mlp[static_cast<size_t>(k)][i];
    }
    for (size_t i = 0; i < net.embed.size(); ++i) net.embed[i] -= lrf * g_embed[i];
}

void fill_normal(std::vector<float>& v, SplitMix64& rng, double scale) {
    for (float& x : v) x = static_cast<float>(rng.next_normal() * scale);
}

SplitMix64 stream(uint64_t seed, const char* tag, uint64_t index) {
    return SplitMix64(derive_stream_seed(seed, fnv1a64(tag), index));
}

}  // namespace

// ---------------------------------------------------------------------------
// generation

static void validate_arch(const Architecture& arch) {
    if (arch.blocks < 2) {
        throw ConfigError("need at least 2 blocks, got " + std::to_string(arch.blocks));
    }
    if (arch.width < 1 || arch.input_dim < 1 || arch.output_dim < 1) {
        throw ConfigError("architecture dimensions must be positive");
    }
}

static Net random_net(const Architecture& arch, uint64_t seed) {
    Net net;
    net.arch = arch;
    auto rng = stream(seed, "harness.init", 0);
    net.embed.resize(static_cast<size_t>(arch.width * arch.input_dim));
    fill_normal(net.embed, rng, 1.0 / std::sqrt(static_cast<double>(arch.input_dim)));
    for (int64_t k = 0; k < arch.blocks; ++k) {
        std::vector<float> mx(static_cast<size_t>(arch.width * arch.width));
        std::vector<float> ml(static_cast<size_t>(arch.width * arch.width));
        fill_normal(mx, rng, 1.0 / std::sqrt(static_cast<double>(arch.width)));
        fill_normal(ml, rng, 1.0 / std::sqrt(static_cast<double>(arch.width)));
        net.mix.push_back(std::move(mx));
        net.mlp.push_back(std::move(ml));
    }
    net.head.resize(static_cast<size_t>(arch.output_dim * arch.width));
    fill_normal(net.head, rng, 1.0 / std::sqrt(static_cast<double>(arch.width)));
    return net;
}

TensorMap random_lattice_checkpoint(const Architecture& arch, uint64_t seed, double scale) {
    validate_arch(arch);
    Net net = random_net(arch, seed);
    TensorMap map = net_to_map(net);
    if (scale != 1.0) {
        for (auto& [_, t] : map.entries) {
            for (float& v : t.data) v = static_cast<float>(v * scale);
        }
    }
    snap_to_grid(map);
    return map;
}

SyntheticTaskSet generate_tasks(uint64_t seed, int64_t task_count, Architecture arch) {
    validate_arch(arch);
    if (task_count < 1) throw ConfigError("task_count must be >= 1");

    SyntheticTaskSet ts;
    ts.seed = seed;
    ts.arch = arch;

    TensorMap base = net_to_map(random_net(arch, seed));
    snap_to_grid(base);
    ts.base = base;

    auto shared_rng = stream(seed, "harness.teacher.shared", 0);
    std::vector<float> shared(static_cast<size_t>(arch.output_dim * arch.input_dim));
    fill_normal(shared, shared_rng, 1.0);

    const double mixer = 1.0 / std::sqrt((1.0 + kTeacherSpread * kTeacherSpread) *
                                         static_cast<double>(arch.input_dim));

    for (int64_t t = 0; t < task_count; ++t) {
        SyntheticTask task;
        task.task_id = "task" + std::to_string(t);
        task.input_dim = arch.input_dim;
        task.output_dim = arch.output_dim;
        task.n_train = kTrainSamples;
        task.n_heldout = kHeldoutSamples;

        auto teacher_rng = stream(seed, "harness.teacher.own", static_cast<uint64_t>(t));
        task.teacher.resize(shared.size());
        for (size_t i = 0; i < shared.size(); ++i) {
            double own = teacher_rng.next_normal();
            task.teacher[i] = static_cast<float>(
                (static_cast<double>(shared[i]) + kTeacherSpread * own) * mixer);
        }

        auto fill_split = [&](const char* tag, int64_t count, std::vector<float>& xs,
                              std::vector<float>& ys) {
            auto rng = stream(seed, tag, static_cast<uint64_t>(t));
            xs.resize(static_cast<size_t>(count * arch.input_dim));
            for (float& v : xs) v = static_cast<float>(rng.next_normal());
            ys.resize(static_cast<size_t>(count * arch.output_dim));
            matmul_xwt(xs.data(), task.teacher.data(), ys.data(), count, arch.output_dim,
                       arch.input_dim);
        };
        fill_split("harness.data.train", task.n_train, task.train_x, task.train_y);
        fill_split("harness.data.heldout", task.n_heldout, task.heldout_x, task.heldout_y);

        Net net = net_from_map(base, arch);
        for (int step = 0; step < kTrainSteps; ++step) {
            train_step(net, task.train_x.data(), task.train_y.data(), task.n_train,
                       kLearningRate);
        }
        TensorMap tuned = net_to_map(net);
        snap_to_grid(tuned);
        ts.finetuned.push_back(std::move(tuned));
        ts.tasks.push_back(std::move(task));
    }
    return ts;
}

double evaluate(const TensorMap& model, const SyntheticTask& task, EvalSlice slice) {
    Architecture arch;
    arch.input_dim = task.input_dim;
    arch.output_dim = task.output_dim;
    const Tensor& embed = model.at("input.embed");
    arch.width = embed.shape[0];
    int64_t blocks = 0;
    while (model.contains(block_name(blocks + 1, "mlp.fc"))) ++blocks;
    arch.blocks = blocks;
    validate_arch(arch);

    Net net = net_from_map(model, arch);
    ForwardState fs;
    forward(net, task.heldout_x.data(), task.n_heldout, fs);

    const int64_t half = task.n_heldout / 2;
    int64_t row_begin = 0, row_count = task.n_heldout;
    if (slice == EvalSlice::validation) {
        row_count = half;
    } else if (slice == EvalSlice::test) {
        row_begin = half;
        row_count = task.n_heldout - half;
    }
    double m = mse(fs.output, task.heldout_y, row_begin * task.output_dim,
                   row_count * task.output_dim);
    return -m;
}

// ---------------------------------------------------------------------------
// sweeps

const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::lambda: return "lambda";
        case SweepAxis::mode: return "mode";
        case SweepAxis::skip_rate: return "skip_rate";
        case SweepAxis::selector: return "selector";
        case SweepAxis::context: return "context";
    }
    return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "lambda") return SweepAxis::lambda;
    if (s == "mode") return SweepAxis::mode;
    if (s == "skip_rate") return SweepAxis::skip_rate;
    if (s == "selector") return SweepAxis::selector;
    if (s == "context") return SweepAxis::context;
    throw ConfigError("unknown sweep axis '" + s + "'");
}

static std::string format_setting(double v) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// evaluates one full compress/retrieve cycle on the task set
static SweepPoint sweep_point(const SyntheticTaskSet& ts, const StoreConfig& cfg,
                              const std::string& setting) {
    auto inputs = ts.model_inputs();
    SuperpositionStore store = compress(ts.base, inputs, cfg);

    SweepPoint point;
    point.setting = setting;

    double val_sum = 0.0, test_sum = 0.0;
    for (size_t i = 0; i < ts.tasks.size(); ++i) {
        TensorMap model = retrieve(store, ts.tasks[i].task_id);
        double val = evaluate(model, ts.tasks[i], EvalSlice::validation);
        double test = evaluate(model, ts.tasks[i], EvalSlice::test);
        point.per_task_metric.push_back(test);
        val_sum += val;
        test_sum += test;
    }
    point.avg_metric = val_sum / static_cast<double>(ts.tasks.size());
    point.test_avg_metric = test_sum / static_cast<double>(ts.tasks.size());

    std::vector<TensorMap> deltas;
    std::vector<MaterializedTransform> transforms;
    for (size_t i = 0; i < ts.tasks.size(); ++i) {
        deltas.push_back(sub(ts.finetuned[i], ts.base));
        TransformSpec spec;
        spec.mode = cfg.mode;
        spec.global_seed = cfg.global_seed;
        spec.model_index = static_cast<uint64_t>(i);
        spec.selector = cfg.selector;
        transforms.push_back(materialize(spec, store.schema));
    }
    point.mean_abs_cosine = pairwise_cosine_stats(deltas, transforms).summary.mean_abs;

    std::vector<double> norms;
    for (size_t i = 0; i < ts.tasks.size(); ++i) {
        norms.push_back(interference_norm_direct(deltas, transforms, i, cfg.lambda));
    }
    std::sort(norms.begin(), norms.end());
    size_t n = norms.size();
    point.interference_norm = (n % 2 == 1) ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);

    point.selected_layers =
        static_cast<int64_t>(select_targets(store.schema, cfg.selector).names.size());
    return point;
}

static void finalize_argbest(SweepResult& result) {
    size_t best = 0;
    for (size_t i = 1; i < result.points.size(); ++i) {
        if (result.points[i].avg_metric > result.points[best].avg_metric) best = i;
    }
    result.argbest_index = best;
}

SweepResult grid_search_lambda(const SyntheticTaskSet& ts, const HarnessModeConfig& config,
                               std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("lambda grid is empty");
    for (size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || !(grid[i] <= 2.0)) {
            throw ConfigError("lambda grid values must be in (0, 2]");
        }
        if (i > 0 && grid[i] <= grid[i - 1]) {
            throw ConfigError("lambda grid must be strictly increasing");
        }
    }

    SweepResult result;
    result.axis = SweepAxis::lambda;
    result.task_ids = ts.task_ids();
    for (double lambda : grid) {
        StoreConfig cfg;
        cfg.mode = config.mode;
        cfg.global_seed = config.global_seed;
        cfg.lambda = lambda;
        cfg.selector = config.selector;
        result.points.push_back(sweep_point(ts, cfg, format_setting(lambda)));
    }
    finalize_argbest(result);
    return result;
}

SweepResult run_ablation(const SyntheticTaskSet& ts, SweepAxis axis,
                         std::span<const std::string> settings,
                         const HarnessModeConfig& config) {
    if (axis == SweepAxis::lambda) {
        std::vector<double> grid;
        for (const auto& s : settings) {
            try {
                grid.push_back(std::stod(s));
            } catch (const std::exception&) {
                throw ConfigError("bad lambda setting '" + s + "'");
            }
        }
        return grid_search_lambda(ts, config, grid);
    }
    if (settings.empty()) throw ConfigError("no settings given");

    SweepResult result;
    result.axis = axis;
    result.task_ids = ts.task_ids();
    for (const auto& s : settings) {
        StoreConfig cfg;
        cfg.mode = config.mode;
        cfg.global_seed = config.global_seed;
        cfg.lambda = config.lambda;
        cfg.selector = config.selector;
        switch (axis) {
            case SweepAxis::mode:
                cfg.mode = transform_mode_from_string(s);
                break;
            case SweepAxis::skip_rate: {
                int64_t rate = 0;
                try {
                    rate = std::stoll(s);
                } catch (const std::exception&) {
                    throw ConfigError("bad skip_rate setting '" + s + "'");
                }
                if (rate < 1) throw ConfigError("bad skip_rate setting '" + s + "'");
                cfg.selector.skip_rate = rate;
                break;
            }
            case SweepAxis::selector:
                cfg.selector.mode = selector_mode_from_string(s);
                break;
            case SweepAxis::context:
                // context matrix choice: random binary diagonal, none, or
                // random normal diagonal
                if (s == "rbd") {
                    cfg.mode = TransformMode::rsf;
                } else if (s == "identity") {
                    cfg.mode = TransformMode::identity;
                } else if (s == "rd") {
                    cfg.mode = TransformMode::rd;
                } else {
                    throw ConfigError("unknown context setting '" + s + "'");
                }
                break;
            case SweepAxis::lambda:
                break;
        }
        try {
            result.points.push_back(sweep_point(ts, cfg, s));
        } catch (const InvalidSpecError& e) {
            throw ConfigError(std::string("setting '") + s + "': " + e.what());
        }
    }
    finalize_argbest(result);
    return result;
}

TensorMap baseline_weight_averaging(std::span<const TensorMap> models) {
    if (models.empty()) throw ConfigError("no models to average");
    for (size_t i = 1; i < models.size(); ++i) {
        check_same_structure(models[0], models[i], "weight_averaging");
    }
    TensorMap out = zeros_like(models[0]);
    const double inv = 1.0 / static_cast<double>(models.size());
    for (auto& [name, t] : out.entries) {
        for (size_t k = 0; k < t.data.size(); ++k) {
            double acc = 0.0;
            for (const auto& m : models) {
                acc += static_cast<double>(m.at(name).data[k]);
            }
            t.data[k] = static_cast<float>(acc * inv);
        }
    }
    return out;
}

TensorMap baseline_task_arithmetic(const TensorMap& base, std::span<const TensorMap> models,
                                   double lambda) {
    // accumulate scaled deltas first, then add the base once: element for
    // element the same operation order as an identity-mode store, so the
    // two agree bit for bit
    TensorMap delta_sum = zeros_like(base);
    for (const auto& m : models) {
        delta_sum = axpy(lambda, sub(m, base), delta_sum);
    }
    TensorMap out = base;
    for (auto& [name, t] : out.entries) {
        const Tensor& d = delta_sum.at(name);
        for (size_t k = 0; k < t.data.size(); ++k) t.data[k] += d.data[k];
    }
    return out;
}

// ---------------------------------------------------------------------------
// emitters

std::string sweep_to_json(const SweepResult& result) {
    json points = json::array();
    for (const auto& p : result.points) {
        points.push_back({{"setting", p.setting},
                          {"per_task_metric", p.per_task_metric},
                          {"avg_metric", p.avg_metric},
                          {"test_avg_metric", p.test_avg_metric},
                          {"mean_abs_cosine", p.mean_abs_cosine},
                          {"interference_norm", p.interference_norm},
                          {"selected_layers", p.selected_layers}});
    }
    json out{{"axis", to_string(result.axis)},
             {"task_ids", result.task_ids},
             {"argbest", result.points.at(result.argbest_index).setting},
             {"points", points}};
    return out.dump(2) + "\n";
}

std::string sweep_to_csv(const SweepResult& result) {
    std::string out = "axis,setting,task_id,metric\n";
    char buf[64];
    const char* axis = to_string(result.axis);
    for (const auto& p : result.points) {
        for (size_t i = 0; i < p.per_task_metric.size(); ++i) {
            snprintf(buf, sizeof(buf), "%.10g", p.per_task_metric[i]);
            out += axis;
            out += ',';
            out += p.setting;
            out += ',';
            out += result.task_ids[i];
            out += ',';
            out += buf;
            out += '\n';
        }
        snprintf(buf, sizeof(buf), "%.10g", p.test_avg_metric);
        out += axis;
        out += ',';
        out += p.setting;
        out += ",avg,";
        out += buf;
        out += '\n';
    }
    return out;
}

}  // namespace randes
