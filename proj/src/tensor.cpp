#include "es/tensor.hpp"

#include <atomic>
#include <numeric>
#include <sstream>

namespace es {

std::int64_t shape_size(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) {
        if (e < 0) throw ShapeError("negative extent in shape " + shape_str(s));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape s, Eigen::ArrayXf data) : shape(std::move(s)), v(std::move(data)) {
    if (shape_size(shape) != v.size())
        throw ShapeError("tensor data size " + std::to_string(v.size()) + " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
    const std::int64_t n = shape_size(s);
    return Tensor(std::move(s), Eigen::ArrayXf::Zero(n));
}

Tensor Tensor::full(Shape s, float value) {
    const std::int64_t n = shape_size(s);
    return Tensor(std::move(s), Eigen::ArrayXf::Constant(n, value));
}

Tensor Tensor::from(Shape s, std::initializer_list<float> data) {
    Tensor t = zeros(std::move(s));
    if (static_cast<std::int64_t>(data.size()) != t.size())
        throw ShapeError("initializer size does not match shape " + shape_str(t.shape));
    std::int64_t i = 0;
    for (float x : data) t.v[i++] = x;
    return t;
}

float& Tensor::at4(int n, int c, int h, int w) {
    const int C = shape[1], H = shape[2], W = shape[3];
    return v[((static_cast<std::int64_t>(n) * C + c) * H + h) * W + w];
}

float Tensor::at4(int n, int c, int h, int w) const {
    const int C = shape[1], H = shape[2], W = shape[3];
    return v[((static_cast<std::int64_t>(n) * C + c) * H + h) * W + w];
}

Eigen::Map<MatrixRM> Tensor::mat(int rows, int cols) {
    if (static_cast<std::int64_t>(rows) * cols != size())
        throw ShapeError("mat() view " + std::to_string(rows) + "x" + std::to_string(cols) + " does not cover tensor " + shape_str(shape));
    return {v.data(), rows, cols};
}

Eigen::Map<const MatrixRM> Tensor::mat(int rows, int cols) const {
    if (static_cast<std::int64_t>(rows) * cols != size())
        throw ShapeError("mat() view " + std::to_string(rows) + "x" + std::to_string(cols) + " does not cover tensor " + shape_str(shape));
    return {v.data(), rows, cols};
}

Eigen::Map<MatrixRM> Tensor::mat() {
    if (shape.size() != 2) throw ShapeError("mat() requires a 2-D tensor, got " + shape_str(shape));
    return mat(shape[0], shape[1]);
}

Eigen::Map<const MatrixRM> Tensor::mat() const {
    if (shape.size() != 2) throw ShapeError("mat() requires a 2-D tensor, got " + shape_str(shape));
    return mat(shape[0], shape[1]);
}

namespace {
std::atomic<bool> g_finite_checks{false};
}

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks() { return g_finite_checks.load(); }

} // namespace es
