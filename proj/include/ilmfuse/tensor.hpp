#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ilmfuse {

/// Dense row-major float32 tensor. Rank is whatever `shape` says; the model
/// code only ever uses rank 1 and rank 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<float> data);

  static Tensor vector(std::vector<float> values);
  static Tensor matrix(std::int64_t rows, std::int64_t cols, std::vector<float> values);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::int64_t rows() const;
  std::int64_t cols() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// Row `r` of a rank-2 tensor.
  std::span<const float> row(std::int64_t r) const;
  std::span<float> row(std::int64_t r);

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<float> data_;
};

std::int64_t element_count(std::span<const std::int64_t> shape);
std::string shape_string(std::span<const std::int64_t> shape);

/// Throws NumericError naming `what` if any value is NaN or infinite.
void require_finite(std::span<const float> values, const char* what);
void require_finite(std::span<const double> values, const char* what);

}  // namespace ilmfuse
