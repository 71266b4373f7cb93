#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fedwcm/errors.hpp"

namespace fedwcm {

// Dense row-major matrix of doubles. The single numeric container used for
// activations, weights, gradients and feature batches.
class Tensor2 {
public:
    Tensor2() : rows_(0), cols_(0) {}

    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        Tensor2 t(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("from_rows: ragged rows");
            std::size_t j = 0;
            for (double v : row) t(i, j++) = v;
            ++i;
        }
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data_).subspan(i * cols_, cols_);
    }

    bool same_shape(const Tensor2& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    // this += a * x
    void add_scaled(const Tensor2& x, double a) {
        require_same_shape(x, "add_scaled");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
    }

    void scale(double a) {
        for (auto& v : data_) v *= a;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void require_same_shape(const Tensor2& other, const char* op) const {
        if (!same_shape(other)) {
            throw DimensionError(std::string(op) + ": shape mismatch (" + shape_str() +
                                 " vs " + other.shape_str() + ")");
        }
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    friend bool operator==(const Tensor2& a, const Tensor2& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

// c = a . b
inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + a.shape_str() + " . " + b.shape_str());
    }
    Tensor2 c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

// c = a^T . b
inline Tensor2 matmul_at_b(const Tensor2& a, const Tensor2& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_at_b: " + a.shape_str() + "^T . " + b.shape_str());
    }
    Tensor2 c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aki * b(k, j);
            }
        }
    }
    return c;
}

// c = a . b^T
inline Tensor2 matmul_a_bt(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_a_bt: " + a.shape_str() + " . " + b.shape_str() + "^T");
    }
    Tensor2 c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    }
    return c;
}

inline void require_finite(const Tensor2& t, const char* where) {
    if (!t.all_finite()) {
        throw NumericError(std::string(where) + ": non-finite value in " + t.shape_str() +
                           " tensor");
    }
}

}  // namespace fedwcm
