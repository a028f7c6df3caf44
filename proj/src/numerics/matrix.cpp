#include "knobrec/numerics/matrix.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace knobrec {

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
}

RealMatrix RealMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n_rows = rows.size();
    const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(n_rows * n_cols);
    for (const auto& r : rows) {
        if (r.size() != n_cols) {
            throw DimensionError("ragged rows in matrix literal");
        }
        data.insert(data.end(), r.begin(), r.end());
    }
    return RealMatrix(n_rows, n_cols, std::move(data));
}

RealMatrix RealMatrix::row_vector(std::span<const double> values) {
    return RealMatrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

bool RealMatrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void RealMatrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const RealMatrix& a, const RealMatrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    }
}

} // namespace knobrec
