#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "es/errors.hpp"

namespace es {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense float32 tensor, row-major flat storage. The one value type the
/// differentiation tape and every layer primitive operate on.
struct Tensor {
    Shape shape;
    Eigen::ArrayXf v;

    Tensor() = default;
    Tensor(Shape s, Eigen::ArrayXf data);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, float value);
    static Tensor scalar(float value) { return full({1}, value); }
    static Tensor from(Shape s, std::initializer_list<float> data);

    std::int64_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    float& operator[](std::int64_t i) { return v[i]; }
    float operator[](std::int64_t i) const { return v[i]; }

    /// 4-D index (N,C,H,W); used by tests and slow paths only.
    float& at4(int n, int c, int h, int w);
    float at4(int n, int c, int h, int w) const;

    Eigen::Map<MatrixRM> mat(int rows, int cols);
    Eigen::Map<const MatrixRM> mat(int rows, int cols) const;
    /// 2-D tensors only.
    Eigen::Map<MatrixRM> mat();
    Eigen::Map<const MatrixRM> mat() const;

    bool all_finite() const { return v.isFinite().all(); }
};

/// Checked mode: when on, tape ops verify outputs are finite and throw
/// NumericError otherwise. Off by default (it is a debugging aid).
void set_finite_checks(bool on);
bool finite_checks();

} // namespace es
