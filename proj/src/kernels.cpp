#include "ilmfuse/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ilmfuse/error.hpp"

namespace ilmfuse::kernels {
namespace {

template <typename T>
std::vector<double> softmax_impl(std::span<const T> logits) {
  if (logits.empty()) throw DimensionError("softmax of empty vector");
  require_finite(logits, "softmax input");
  double max = logits[0];
  for (T v : logits) max = std::max(max, static_cast<double>(v));
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - max);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

void check_affine_shapes(std::span<const float> x, const Tensor& weight,
                         std::span<const float> bias) {
  if (weight.rank() != 2) throw DimensionError("affine weight must be rank 2");
  if (static_cast<std::int64_t>(x.size()) != weight.cols()) {
    throw DimensionError("affine input length " + std::to_string(x.size()) +
                         " does not match weight " + shape_string(weight.shape()));
  }
  if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != weight.rows()) {
    throw DimensionError("affine bias length " + std::to_string(bias.size()) +
                         " does not match weight " + shape_string(weight.shape()));
  }
}

inline float affine_row(std::span<const float> x, const float* w, std::size_t cols,
                        float bias) {
  double acc = 0.0;
  for (std::size_t k = 0; k < cols; ++k) acc += static_cast<double>(w[k]) * x[k];
  return static_cast<float>(acc + bias);
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ValidationError("unknown activation \"" + std::string(name) + "\"");
}

std::string_view activation_name(Activation act) {
  return act == Activation::kTanh ? "tanh" : "relu";
}

std::vector<double> softmax(std::span<const float> logits) { return softmax_impl(logits); }
std::vector<double> softmax(std::span<const double> logits) { return softmax_impl(logits); }

std::vector<double> log_softmax(std::span<const float> logits) {
  if (logits.empty()) throw DimensionError("log_softmax of empty vector");
  require_finite(logits, "log_softmax input");
  double max = logits[0];
  for (float v : logits) max = std::max(max, static_cast<double>(v));
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v) - max);
  const double log_z = max + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - log_z;
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw DimensionError("log_sum_exp of empty vector");
  const double max = *std::max_element(values.begin(), values.end());
  if (std::isnan(max)) throw NumericError("NaN in log_sum_exp input");
  if (max == -std::numeric_limits<double>::infinity()) return max;
  if (max == std::numeric_limits<double>::infinity()) throw NumericError("+inf in log_sum_exp input");
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  return max + std::log(sum);
}

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

std::vector<float> affine(std::span<const float> x, const Tensor& weight,
                          std::span<const float> bias) {
  check_affine_shapes(x, weight, bias);
  const auto rows = weight.rows();
  const auto cols = static_cast<std::size_t>(weight.cols());
  const float* w = weight.data().data();
  std::vector<float> y(static_cast<std::size_t>(rows));
  const bool fan_out = rows * static_cast<long>(cols) >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (fan_out)
  for (std::int64_t r = 0; r < rows; ++r) {
    y[r] = affine_row(x, w + r * cols, cols, bias.empty() ? 0.0f : bias[r]);
  }
  return y;
}

std::vector<float> affine_reference(std::span<const float> x, const Tensor& weight,
                                    std::span<const float> bias) {
  check_affine_shapes(x, weight, bias);
  const auto rows = weight.rows();
  const auto cols = static_cast<std::size_t>(weight.cols());
  std::vector<float> y(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    y[r] = affine_row(x, weight.data().data() + r * cols, cols, bias.empty() ? 0.0f : bias[r]);
  }
  return y;
}

void apply_activation(std::span<float> values, Activation act) {
  if (act == Activation::kTanh) {
    for (float& v : values) v = std::tanh(v);
  } else {
    for (float& v : values) v = std::max(v, 0.0f);
  }
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gamma,
                              std::span<const float> beta, float eps) {
  if (x.empty()) throw DimensionError("layer_norm of empty vector");
  if (gamma.size() != x.size() || beta.size() != x.size()) {
    throw DimensionError("layer_norm parameter length mismatch");
  }
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<float> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = static_cast<float>((x[i] - mean) * inv) * gamma[i] + beta[i];
  }
  return y;
}

std::vector<float> add(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("add: length mismatch");
  std::vector<float> y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

}  // namespace ilmfuse::kernels
