// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace magpred {

// Dense row-major matrix of doubles. Scalars are (1,1), row vectors (1,n).
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols)
        : rows_(rows), cols_(cols), data_(check_extent(rows, cols), 0.0) {}
    Tensor(int rows, int cols, std::vector<double> values)
        : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (data_.size() != check_extent(rows, cols))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
    static Tensor full(int rows, int cols, double v) {
        Tensor t(rows, cols);
        for (double& x : t.data_) x = v;
        return t;
    }
    static Tensor scalar(double v) { return full(1, 1, v); }
    static Tensor identity(int n) {
        Tensor t(n, n);
        for (int i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }
    template <class Rng>
    static Tensor uniform(int rows, int cols, double lo, double hi, Rng& rng) {
        Tensor t(rows, cols);
        std::uniform_real_distribution<double> dist(lo, hi);
        for (double& x : t.data_) x = dist(rng);
        return t;
    }
    template <class Rng>
    static Tensor gaussian(int rows, int cols, double mean, double stddev, Rng& rng) {
        Tensor t(rows, cols);
        std::normal_distribution<double> dist(mean, stddev);
        for (double& x : t.data_) x = dist(rng);
        return t;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }
    std::string shape_str() const {
        return "(" + std::to_string(rows_) + "," + std::to_string(cols_) + ")";
    }

private:
    static std::size_t check_extent(int rows, int cols) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative dimension");
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

}  // namespace magpred
