#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "amefu/errors.hpp"

namespace amefu {

// Dense row-major 2-D array of doubles. All internal arithmetic is double
// precision; float32 appears only in the on-disk dataset format.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) {
        check(r, c);
        return data[r * cols + c];
    }
    double at(std::size_t r, std::size_t c) const {
        check(r, c);
        return data[r * cols + c];
    }

    std::span<double> row(std::size_t r) {
        check(r, 0);
        return std::span<double>(data.data() + r * cols, cols);
    }
    std::span<const double> row(std::size_t r) const {
        check(r, 0);
        return std::span<const double>(data.data() + r * cols, cols);
    }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

  private:
    void check(std::size_t r, std::size_t c) const {
        if (r >= rows || c >= cols)
            throw IndexError("matrix index out of range");
    }
};

// Dense (b, d, l)-indexed 3-D array: b items, d frames each, l features per
// frame. Row (b_i, d_i) is the natural unit of work for instance statistics.
struct Batch3 {
    std::size_t b = 0;
    std::size_t d = 0;
    std::size_t l = 0;
    std::vector<double> data; // b * d * l

    Batch3() = default;
    Batch3(std::size_t b_, std::size_t d_, std::size_t l_, double fill = 0.0)
        : b(b_), d(d_), l(l_), data(b_ * d_ * l_, fill) {}

    double& at(std::size_t bi, std::size_t di, std::size_t li) {
        check(bi, di, li);
        return data[(bi * d + di) * l + li];
    }
    double at(std::size_t bi, std::size_t di, std::size_t li) const {
        check(bi, di, li);
        return data[(bi * d + di) * l + li];
    }

    std::span<double> row(std::size_t bi, std::size_t di) {
        check(bi, di, 0);
        return std::span<double>(data.data() + (bi * d + di) * l, l);
    }
    std::span<const double> row(std::size_t bi, std::size_t di) const {
        check(bi, di, 0);
        return std::span<const double>(data.data() + (bi * d + di) * l, l);
    }

    bool same_shape(const Batch3& other) const {
        return b == other.b && d == other.d && l == other.l;
    }

  private:
    void check(std::size_t bi, std::size_t di, std::size_t li) const {
        if (bi >= b || di >= d || li >= l)
            throw IndexError("batch index out of range");
    }
};

} // namespace amefu
