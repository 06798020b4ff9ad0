#include "randes/transform.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>

#include "randes/errors.hpp"
#include "randes/rng.hpp"

namespace randes {

const char* to_string(TransformMode m) {
    switch (m) {
        case TransformMode::identity: return "identity";
        case TransformMode::shuffle: return "shuffle";
        case TransformMode::shift: return "shift";
        case TransformMode::rsf: return "rsf";
        case TransformMode::srsf: return "srsf";
        case TransformMode::rd: return "rd";
    }
    return "?";
}

TransformMode transform_mode_from_string(const std::string& s) {
    if (s == "identity") return TransformMode::identity;
    if (s == "shuffle") return TransformMode::shuffle;
    if (s == "shift") return TransformMode::shift;
    if (s == "rsf") return TransformMode::rsf;
    if (s == "srsf") return TransformMode::srsf;
    if (s == "rd") return TransformMode::rd;
    throw InvalidSpecError("unknown transform mode '" + s + "'");
}

bool mode_is_orthogonal(TransformMode m) { return m != TransformMode::rd; }

static size_t vector_length(const Tensor& t) {
    // per-column vectors: one entry per column of a matrix, one entry per
    // element of a 1-D tensor
    return static_cast<size_t>(t.rank() == 2 ? t.shape[1] : t.shape[0]);
}

MaterializedTransform materialize(const TransformSpec& spec, const ModelSchema& schema) {
    MaterializedTransform out;
    out.mode = spec.mode;
    if (spec.mode == TransformMode::identity) return out;

    const uint64_t eff = spec.effective_seed();
    auto positions = selected_positions(schema, spec.selector);

    const bool wants_perm = spec.mode == TransformMode::shuffle ||
                            spec.mode == TransformMode::shift ||
                            spec.mode == TransformMode::srsf;
    const bool wants_signs = spec.mode == TransformMode::rsf || spec.mode == TransformMode::srsf;
    const bool wants_diag = spec.mode == TransformMode::rd;

    for (const auto& [type, pos] : positions) {
        const LayerGroup& group = schema.groups.at(type);

        if (wants_perm && pos.size() >= 2) {
            GroupPermutation perm;
            for (size_t p : pos) perm.layers.push_back(group.members[p]);
            perm.gather.resize(pos.size());
            std::iota(perm.gather.begin(), perm.gather.end(), 0u);
            if (spec.mode == TransformMode::shift) {
                // layer at slot p receives the tensor one slot shallower
                const size_t n = perm.gather.size();
                for (size_t p = 0; p < n; ++p) {
                    perm.gather[p] = static_cast<uint32_t>((p + n - 1) % n);
                }
            } else {
                SplitMix64 rng(derive_stream_seed(eff, kStreamPermutation, fnv1a64(type)));
                fisher_yates(std::span<uint32_t>(perm.gather), rng);
            }
            out.perms.emplace(type, std::move(perm));
        }

        if (wants_signs || wants_diag) {
            for (size_t p : pos) {
                const std::string& name = group.members[p];
                const size_t n = static_cast<size_t>(
                    group.shape.size() == 2 ? group.shape[1] : group.shape[0]);
                if (wants_signs) {
                    SplitMix64 rng(derive_stream_seed(eff, kStreamSign, fnv1a64(name)));
                    std::vector<float> v(n);
                    for (auto& s : v) s = rng.next_sign();
                    out.signs.emplace(name, std::move(v));
                } else {
                    SplitMix64 rng(derive_stream_seed(eff, kStreamDiagonal, fnv1a64(name)));
                    std::vector<float> v(n);
                    for (auto& s : v) s = static_cast<float>(rng.next_normal());
                    out.diags.emplace(name, std::move(v));
                }
            }
        }
    }
    return out;
}

static const Tensor& fetch(const TensorMap& x, const std::string& name, const char* what) {
    auto it = x.entries.find(name);
    if (it == x.entries.end()) {
        throw StructuralMismatchError(std::string(what) + ": tensor '" + name +
                                      "' required by the transform is missing");
    }
    return it->second;
}

static Tensor& fetch_mut(TensorMap& x, const std::string& name, const char* what) {
    auto it = x.entries.find(name);
    if (it == x.entries.end()) {
        throw StructuralMismatchError(std::string(what) + ": tensor '" + name +
                                      "' required by the transform is missing");
    }
    return it->second;
}

// out[layers[p]] = in[layers[gather[p]]]
static void apply_perms(const MaterializedTransform& t, const TensorMap& in, TensorMap& out,
                        bool inverse) {
    for (const auto& [type, perm] : t.perms) {
        // shapes within a group are identical by schema construction, but the
        // input map may disagree with the schema the transform was drawn for
        const Tensor& first = fetch(in, perm.layers[0], "apply");
        for (const auto& name : perm.layers) {
            const Tensor& member = fetch(in, name, "apply");
            if (!member.same_shape(first)) {
                throw StructuralMismatchError("apply: tensor '" + name +
                                              "' shape differs within group '" + type + "'");
            }
        }
        for (size_t p = 0; p < perm.gather.size(); ++p) {
            const std::string& dst = inverse ? perm.layers[perm.gather[p]] : perm.layers[p];
            const std::string& src = inverse ? perm.layers[p] : perm.layers[perm.gather[p]];
            out.at(dst).data = in.at(src).data;
        }
    }
}

static void scale_columns(Tensor& t, const std::vector<float>& v, const char* what,
                          bool reciprocal) {
    if (vector_length(t) != v.size()) {
        throw StructuralMismatchError(std::string(what) + ": tensor '" + t.name +
                                      "' has " + std::to_string(vector_length(t)) +
                                      " columns, vector has " + std::to_string(v.size()));
    }
    if (t.rank() == 1) {
        for (size_t i = 0; i < v.size(); ++i) {
            float s = v[i];
            if (reciprocal) {
                if (std::fabs(s) < 1e-12f) {
                    throw NumericalDegeneracyError("tensor '" + t.name +
                                                   "': diagonal entry too close to zero");
                }
                t.data[i] /= s;
            } else {
                t.data[i] *= s;
            }
        }
        return;
    }
    const int64_t rows = t.shape[0];
    const int64_t cols = t.shape[1];
    if (reciprocal) {
        for (int64_t c = 0; c < cols; ++c) {
            if (std::fabs(v[static_cast<size_t>(c)]) < 1e-12f) {
                throw NumericalDegeneracyError("tensor '" + t.name +
                                               "': diagonal entry too close to zero");
            }
        }
    }
    for (int64_t r = 0; r < rows; ++r) {
        float* row = t.data.data() + r * cols;
        if (reciprocal) {
            for (int64_t c = 0; c < cols; ++c) row[c] /= v[static_cast<size_t>(c)];
        } else {
            for (int64_t c = 0; c < cols; ++c) row[c] *= v[static_cast<size_t>(c)];
        }
    }
}

TensorMap apply(const MaterializedTransform& t, const TensorMap& x) {
    TensorMap out = x;
    apply_perms(t, x, out, /*inverse=*/false);
    for (const auto& [name, v] : t.signs) {
        scale_columns(fetch_mut(out, name, "apply"), v, "apply", false);
    }
    for (const auto& [name, v] : t.diags) {
        scale_columns(fetch_mut(out, name, "apply"), v, "apply", false);
    }
    return out;
}

TensorMap apply_inverse(const MaterializedTransform& t, const TensorMap& x) {
    // apply is "permute, then scale", so the inverse is "unscale, then
    // unpermute"; sign vectors are their own reciprocal
    TensorMap out = x;
    for (const auto& [name, v] : t.signs) {
        scale_columns(fetch_mut(out, name, "apply_inverse"), v, "apply_inverse", false);
    }
    for (const auto& [name, v] : t.diags) {
        scale_columns(fetch_mut(out, name, "apply_inverse"), v, "apply_inverse", true);
    }
    TensorMap result = out;
    apply_perms(t, out, result, /*inverse=*/true);
    return result;
}

}  // namespace randes
