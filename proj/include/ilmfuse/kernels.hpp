#pragma once

// Dense numerical kernels shared by every model.
//
// Weights and activations are float32. Anything that ends up in a decode
// score (softmax, log-softmax, log-sum-exp) is computed and returned in
// float64.
//
// The matrix-vector kernels come in two flavours: `affine` splits output
// rows across OpenMP threads, `affine_reference` is the plain serial loop.
// Each output row is reduced by the same sequential inner loop in both, so
// the results are bit-identical regardless of thread count.

#include <span>
#include <string_view>
#include <vector>

#include "ilmfuse/tensor.hpp"

namespace ilmfuse::kernels {

enum class Activation { kTanh, kRelu };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation act);

/// Max-shifted softmax. Throws DimensionError on empty input and
/// NumericError on non-finite input.
std::vector<double> softmax(std::span<const float> logits);
std::vector<double> softmax(std::span<const double> logits);

/// Max-shifted log-softmax; same error contract as softmax.
std::vector<double> log_softmax(std::span<const float> logits);

/// log(sum(exp(v))) with max shift. Empty input is a DimensionError.
/// An all -inf input returns -inf.
double log_sum_exp(std::span<const double> values);

/// Two-term log-sum-exp used in lattice recursions and hypothesis merging.
double log_add(double a, double b);

/// y = W x + b, W is [out, in]. `bias` may be empty.
std::vector<float> affine(std::span<const float> x, const Tensor& weight,
                          std::span<const float> bias);

/// Serial reference for `affine`.
std::vector<float> affine_reference(std::span<const float> x, const Tensor& weight,
                                    std::span<const float> bias);

/// Row count above which `affine` fans out over threads. Below it the
/// thread start-up costs more than the work.
inline constexpr long kParallelWorkThreshold = 1 << 15;

void apply_activation(std::span<float> values, Activation act);

float sigmoid(float x);

/// (x - mean) / sqrt(var + eps) * gamma + beta over the whole vector.
std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gamma,
                              std::span<const float> beta, float eps = 1e-5f);

/// Element-wise sum of two equal-length vectors.
std::vector<float> add(std::span<const float> a, std::span<const float> b);

}  // namespace ilmfuse::kernels
