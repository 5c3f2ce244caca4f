#pragma once

#include "hampert/workspace.hpp"

#include <optional>
#include <vector>

namespace hampert {

/// Dense rational matrix with exact elimination. Row-major.
struct QMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<Rat> a;

    QMatrix() = default;
    QMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, Rat(0)) {}
    Rat& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    const Rat& at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

/// Reduced row echelon form in place; returns pivot column per pivot row.
std::vector<std::size_t> rref(QMatrix& m);

/// Canonical basis of the right nullspace (deterministic order).
std::vector<std::vector<Rat>> nullspace(QMatrix m);

/// One exact solution of M x = rhs, or nullopt if inconsistent.
std::optional<std::vector<Rat>> solve(QMatrix m, std::vector<Rat> rhs);

/// Inverse of a square matrix, or nullopt if singular.
std::optional<QMatrix> inverse(const QMatrix& m);

}  // namespace hampert
