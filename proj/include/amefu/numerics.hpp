#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "amefu/matrix.hpp"

namespace amefu::numerics {

// Standard matrix product. Requires a.cols == b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

// out = m * v for a (rows x cols) matrix and length-cols vector.
void matvec(const Matrix& m, std::span<const double> v, std::span<double> out);

// Per-row mean and standard deviation over the column dimension. The std uses
// the population variance with eps added inside the square root:
//   stds[r] = sqrt((1/L) * sum_l (x[r,l] - mean)^2 + eps)
// Summation is sequential in row-major order for bit-reproducibility.
std::pair<std::vector<double>, std::vector<double>> row_mean_std(const Matrix& x, double eps);

// Mean/std of a single row, same contract as row_mean_std.
std::pair<double, double> mean_std(std::span<const double> row, double eps);

// Numerically stable softmax (max-subtraction). Errors on empty input.
std::vector<double> softmax(std::span<const double> scores);

// -log(probs[target]) with probs clamped to >= 1e-12 before the log, so
// early-training saturation cannot abort a run.
double cross_entropy(std::span<const double> probs, std::size_t target);

inline constexpr double kProbClamp = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// a.b / (|a| |b|). Errors on a zero-norm input rather than silently
// returning 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// a / |a|. Errors on zero norm.
std::vector<double> l2_normalize(std::span<const double> a);

// Central-difference gradient oracle: (f(p + h e_i) - f(p - h e_i)) / (2h).
// Used by the acceptance tests to verify every hand-derived backward pass.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> p, double h);

} // namespace amefu::numerics
