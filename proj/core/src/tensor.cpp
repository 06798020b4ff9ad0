#include "randes/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace randes {

static void validate_shape(const std::string& name, const std::vector<int64_t>& shape,
                           size_t data_len) {
    if (shape.empty() || shape.size() > 2) {
        throw StructuralMismatchError("tensor '" + name + "': rank " +
                                      std::to_string(shape.size()) +
                                      " unsupported, expected 1 or 2");
    }
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) {
            throw StructuralMismatchError("tensor '" + name + "': non-positive dimension");
        }
        n *= d;
    }
    if (static_cast<size_t>(n) != data_len) {
        throw StructuralMismatchError("tensor '" + name + "': shape wants " +
                                      std::to_string(n) + " values, got " +
                                      std::to_string(data_len));
    }
}

Tensor::Tensor(std::string name_, std::vector<int64_t> shape_, std::vector<float> data_)
    : name(std::move(name_)), shape(std::move(shape_)), data(std::move(data_)) {
    validate_shape(name, shape, data.size());
}

Tensor Tensor::vec(std::string name, int64_t n, float fill) {
    return Tensor(std::move(name), {n}, std::vector<float>(static_cast<size_t>(n), fill));
}

Tensor Tensor::mat(std::string name, int64_t rows, int64_t cols, float fill) {
    return Tensor(std::move(name), {rows, cols},
                  std::vector<float>(static_cast<size_t>(rows * cols), fill));
}

int64_t Tensor::numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

void TensorMap::insert(Tensor t) {
    auto name = t.name;
    if (!entries.emplace(name, std::move(t)).second) {
        throw StructuralMismatchError("tensor '" + name + "': duplicate name");
    }
}

const Tensor& TensorMap::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) {
        throw StructuralMismatchError("tensor '" + name + "': not present");
    }
    return it->second;
}

Tensor& TensorMap::at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) {
        throw StructuralMismatchError("tensor '" + name + "': not present");
    }
    return it->second;
}

int64_t TensorMap::total_numel() const {
    int64_t n = 0;
    for (const auto& [_, t] : entries) n += t.numel();
    return n;
}

TensorMap zeros_like(const TensorMap& model) {
    TensorMap out;
    for (const auto& [name, t] : model.entries) {
        Tensor z;
        z.name = name;
        z.shape = t.shape;
        z.data.assign(t.data.size(), 0.0f);
        out.entries.emplace(name, std::move(z));
    }
    return out;
}

void check_same_structure(const TensorMap& x, const TensorMap& y, const char* op_name) {
    auto xi = x.entries.begin();
    auto yi = y.entries.begin();
    while (xi != x.entries.end() && yi != y.entries.end()) {
        if (xi->first != yi->first) {
            const std::string& offender = std::min(xi->first, yi->first);
            throw StructuralMismatchError(std::string(op_name) + ": tensor '" + offender +
                                          "' present in only one operand");
        }
        if (xi->second.shape != yi->second.shape) {
            throw StructuralMismatchError(std::string(op_name) + ": tensor '" + xi->first +
                                          "' shape mismatch");
        }
        ++xi;
        ++yi;
    }
    if (xi != x.entries.end()) {
        throw StructuralMismatchError(std::string(op_name) + ": tensor '" + xi->first +
                                      "' present in only one operand");
    }
    if (yi != y.entries.end()) {
        throw StructuralMismatchError(std::string(op_name) + ": tensor '" + yi->first +
                                      "' present in only one operand");
    }
}

TensorMap axpy(double a, const TensorMap& x, const TensorMap& y) {
    check_same_structure(x, y, "axpy");
    TensorMap out;
    const float af = static_cast<float>(a);
    auto xi = x.entries.begin();
    for (const auto& [name, yt] : y.entries) {
        const Tensor& xt = xi->second;
        Tensor o;
        o.name = name;
        o.shape = yt.shape;
        o.data.resize(yt.data.size());
        for (size_t k = 0; k < yt.data.size(); ++k) {
            o.data[k] = af * xt.data[k] + yt.data[k];
        }
        out.entries.emplace(name, std::move(o));
        ++xi;
    }
    return out;
}

TensorMap sub(const TensorMap& x, const TensorMap& y) {
    check_same_structure(x, y, "sub");
    TensorMap out;
    auto yi = y.entries.begin();
    for (const auto& [name, xt] : x.entries) {
        const Tensor& yt = yi->second;
        Tensor o;
        o.name = name;
        o.shape = xt.shape;
        o.data.resize(xt.data.size());
        for (size_t k = 0; k < xt.data.size(); ++k) {
            o.data[k] = xt.data[k] - yt.data[k];
        }
        out.entries.emplace(name, std::move(o));
        ++yi;
    }
    return out;
}

double frobenius_norm(const TensorMap& x) {
    std::vector<double> partials;
    partials.reserve(x.entries.size());
    for (const auto& [_, t] : x.entries) {
        double s = 0.0;
        for (float v : t.data) {
            s += static_cast<double>(v) * static_cast<double>(v);
        }
        partials.push_back(s);
    }
    std::sort(partials.begin(), partials.end());
    double total = 0.0;
    for (double p : partials) total += p;
    return std::sqrt(total);
}

double dot(const TensorMap& x, const TensorMap& y) {
    check_same_structure(x, y, "dot");
    double total = 0.0;
    auto yi = y.entries.begin();
    for (const auto& [_, xt] : x.entries) {
        const Tensor& yt = yi->second;
        double s = 0.0;
        for (size_t k = 0; k < xt.data.size(); ++k) {
            s += static_cast<double>(xt.data[k]) * static_cast<double>(yt.data[k]);
        }
        total += s;
        ++yi;
    }
    return total;
}

double cosine(const TensorMap& x, const TensorMap& y) {
    double nx = frobenius_norm(x);
    double ny = frobenius_norm(y);
    if (nx == 0.0 || ny == 0.0) {
        throw DegenerateInputError("cosine: zero-norm operand");
    }
    double c = dot(x, y) / (nx * ny);
    return std::clamp(c, -1.0, 1.0);
}

bool bit_equal(const TensorMap& x, const TensorMap& y) {
    if (x.entries.size() != y.entries.size()) return false;
    auto yi = y.entries.begin();
    for (const auto& [name, xt] : x.entries) {
        if (name != yi->first) return false;
        const Tensor& yt = yi->second;
        if (xt.shape != yt.shape) return false;
        for (size_t k = 0; k < xt.data.size(); ++k) {
            if (std::bit_cast<uint32_t>(xt.data[k]) != std::bit_cast<uint32_t>(yt.data[k])) {
                return false;
            }
        }
        ++yi;
    }
    return true;
}

}  // namespace randes
