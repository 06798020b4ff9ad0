#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "randes/errors.hpp"

namespace randes {

// Dense row-major float32 tensor, rank 1 or 2, all dimensions positive.
struct Tensor {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::string name_, std::vector<int64_t> shape_, std::vector<float> data_);

    static Tensor vec(std::string name, int64_t n, float fill = 0.0f);
    static Tensor mat(std::string name, int64_t rows, int64_t cols, float fill = 0.0f);

    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t rows() const { return shape[0]; }
    int64_t cols() const { return rank() == 2 ? shape[1] : int64_t{1}; }
    int64_t numel() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }
};

// Ordered collection of named tensors. Iteration is always lexicographic by
// name; every reduction and elementwise operation walks entries in that
// order so results are reproducible run to run.
struct TensorMap {
    std::map<std::string, Tensor> entries;
    std::map<std::string, std::string> metadata;

    bool contains(const std::string& name) const { return entries.count(name) != 0; }
    size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }

    // Throws StructuralMismatchError on duplicate names.
    void insert(Tensor t);

    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    int64_t total_numel() const;
};

// All-zero map with the same names and shapes as the model.
TensorMap zeros_like(const TensorMap& model);

// Throws StructuralMismatchError naming the first offending tensor if the
// two maps do not have identical name sets and shapes.
void check_same_structure(const TensorMap& x, const TensorMap& y,
                          const char* op_name);

// Elementwise a*x + y. Both maps must have identical structure.
TensorMap axpy(double a, const TensorMap& x, const TensorMap& y);

// Elementwise x - y. Both maps must have identical structure.
TensorMap sub(const TensorMap& x, const TensorMap& y);

// sqrt of the sum of squares over every entry of every tensor. Squares are
// accumulated per tensor in 64-bit, and the per-tensor partial sums are
// combined in ascending value order, so the result does not depend on how
// equal-shaped tensors are named or arranged.
double frobenius_norm(const TensorMap& x);

// Frobenius inner product, 64-bit accumulation in lexicographic order.
double dot(const TensorMap& x, const TensorMap& y);

// dot(x, y) / (|x| * |y|), clamped to [-1, 1]. Throws DegenerateInputError
// if either operand has zero norm.
double cosine(const TensorMap& x, const TensorMap& y);

// Exact elementwise equality including name sets and shapes.
bool bit_equal(const TensorMap& x, const TensorMap& y);

}  // namespace randes
