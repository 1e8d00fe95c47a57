#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfgnn {

/// Row-major dense matrix of doubles. Carrier for all node/message/relation
/// representations and parameter blocks.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("DenseMatrix: data length " +
                                        std::to_string(data_.size()) + " != " +
                                        std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    /// Build from nested initializer-style rows (test convenience).
    static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return DenseMatrix(0, 0);
        DenseMatrix m(rows.size(), rows[0].size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) {
                throw std::invalid_argument("DenseMatrix::from_rows: ragged rows");
            }
            for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    static DenseMatrix scalar(double v) { return DenseMatrix(1, 1, {v}); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const DenseMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

    /// Scalar access for 1x1 matrices.
    double item() const {
        if (!is_scalar()) {
            throw std::invalid_argument("DenseMatrix::item: not 1x1 (" + shape_str() + ")");
        }
        return data_[0];
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool operator==(const DenseMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// True when every entry of a and b is bitwise identical (distinguishes -0.0,
/// unlike operator==).
inline bool bitwise_equal(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) return false;
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&pa[i], &pb[i], sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace sfgnn
