#include "amefu/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace amefu::numerics {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows) + ")");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

void matvec(const Matrix& m, std::span<const double> v, std::span<double> out) {
    if (v.size() != m.cols || out.size() != m.rows)
        throw ShapeError("matvec: shape mismatch");
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.data.data() + i * m.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
}

std::pair<double, double> mean_std(std::span<const double> row, double eps) {
    if (row.empty())
        throw ShapeError("mean_std: empty row");
    if (eps < 0.0)
        throw ShapeError("mean_std: eps must be non-negative");
    const double inv_l = 1.0 / static_cast<double>(row.size());
    double sum = 0.0;
    for (double x : row) sum += x;
    const double mean = sum * inv_l;
    double sq = 0.0;
    for (double x : row) {
        const double dlt = x - mean;
        sq += dlt * dlt;
    }
    return {mean, std::sqrt(sq * inv_l + eps)};
}

std::pair<std::vector<double>, std::vector<double>> row_mean_std(const Matrix& x, double eps) {
    if (x.cols == 0)
        throw ShapeError("row_mean_std: zero columns");
    std::vector<double> means(x.rows), stds(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto [m, s] = mean_std(x.row(r), eps);
        means[r] = m;
        stds[r] = s;
    }
    return {std::move(means), std::move(stds)};
}

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty())
        throw ShapeError("softmax: empty input");
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

double cross_entropy(std::span<const double> probs, std::size_t target) {
    if (target >= probs.size())
        throw IndexError("cross_entropy: target " + std::to_string(target) +
                         " out of range for " + std::to_string(probs.size()) + " classes");
    return -std::log(std::max(probs[target], kProbClamp));
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0)
        throw DegenerateInputError("cosine_similarity: zero-norm input");
    return dot(a, b) / (na * nb);
}

std::vector<double> l2_normalize(std::span<const double> a) {
    const double n = norm(a);
    if (n == 0.0)
        throw DegenerateInputError("l2_normalize: zero-norm input");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
    return out;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> p, double h) {
    if (h <= 0.0)
        throw NumericError("finite_diff_grad: h must be positive");
    std::vector<double> work(p.begin(), p.end());
    std::vector<double> grad(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = work[i];
        work[i] = orig + h;
        const double fp = f(work);
        work[i] = orig - h;
        const double fm = f(work);
        work[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                               std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace amefu::numerics
