#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace knobrec {

using RealVector = std::vector<double>;

/// Dense row-major matrix of doubles. Batched quantities (interaction rows,
/// latent means, logits) are stored one sample per row.
class RealMatrix {
public:
    RealMatrix() = default;
    RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static RealMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static RealMatrix row_vector(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const RealMatrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;
    void fill(double value);

    bool operator==(const RealMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Throws DimensionError naming `what` unless `a` and `b` have equal shapes.
void require_same_shape(const RealMatrix& a, const RealMatrix& b, const char* what);

} // namespace knobrec
