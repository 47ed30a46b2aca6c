#include "ilmfuse/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ilmfuse/error.hpp"

namespace ilmfuse {

std::int64_t element_count(std::span<const std::int64_t> shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(std::span<const std::int64_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(element_count(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != element_count(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<float> values) {
  auto n = static_cast<std::int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::vector<float> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on rank-" + std::to_string(rank()) + " tensor");
  return shape_[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on rank-" + std::to_string(rank()) + " tensor");
  return shape_[1];
}

std::span<const float> Tensor::row(std::int64_t r) const {
  const auto c = cols();
  if (r < 0 || r >= rows()) throw DimensionError("row index out of range");
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(r * c),
                                               static_cast<std::size_t>(c));
}

std::span<float> Tensor::row(std::int64_t r) {
  const auto c = cols();
  if (r < 0 || r >= rows()) throw DimensionError("row index out of range");
  return std::span<float>(data_).subspan(static_cast<std::size_t>(r * c),
                                         static_cast<std::size_t>(c));
}

void require_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

}  // namespace ilmfuse
