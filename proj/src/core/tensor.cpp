#include "deepinv/core/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "deepinv/core/errors.hpp"

namespace deepinv {

std::size_t shape_numel(const Tensor::Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), Real{0}) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::scalar(Real value) { return Tensor({}, {value}); }

Tensor Tensor::full(Shape shape, Real value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<Real> values) {
  return Tensor({rows, cols}, std::vector<Real>(values));
}

Tensor Tensor::vector(std::initializer_list<Real> values) {
  return Tensor({values.size()}, std::vector<Real>(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[1];
}

Real Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::row_slice(std::size_t begin, std::size_t end) const {
  const std::size_t c = cols();
  if (begin > end || end > rows()) throw DimensionError("row slice out of range");
  return Tensor({end - begin, c},
                std::vector<Real>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                  data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows of nothing");
  const std::size_t n = rows.front().numel();
  std::vector<Real> data;
  data.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.numel() != n) throw DimensionError("stack_rows with ragged rows");
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  return Tensor({rows.size(), n}, std::move(data));
}

}  // namespace deepinv
