#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ilmfuse/tensor.hpp"

namespace ilmfuse {

using Vector = std::vector<float>;
using Sequence = std::vector<Vector>;

/// One LSTM cell. Fused gate blocks are stacked in the order
/// (input, forget, cell, output): rows [0,H) are the input gate, [H,2H)
/// the forget gate, [2H,3H) the cell candidate and [3H,4H) the output gate.
struct LstmCellParams {
  Tensor w_ih;  // [4H, in]
  Tensor w_hh;  // [4H, H]
  Tensor b_ih;  // [4H]
  Tensor b_hh;  // [4H]

  std::int64_t hidden_size() const { return w_hh.dim(1); }
  std::int64_t input_size() const { return w_ih.dim(1); }

  /// Throws DimensionError if the four tensors do not describe one cell.
  void validate() const;
};

struct LstmState {
  Vector h;
  Vector c;

  static LstmState zeros(std::int64_t hidden);
  bool operator==(const LstmState&) const = default;
};

/// Affine map plus optional layer norm applied to a layer's output.
struct OutputTransform {
  std::optional<Tensor> proj_w;  // [out, in]
  std::optional<Tensor> proj_b;  // [out]
  std::optional<Tensor> ln_gamma;
  std::optional<Tensor> ln_beta;

  bool empty() const { return !proj_w && !ln_gamma; }
  /// Projection first, then normalization.
  Vector apply(std::span<const float> x) const;
};

struct LstmLayer {
  LstmCellParams forward;
  std::optional<LstmCellParams> backward;
  OutputTransform output;
};

/// One time step. The returned state's `h` is the cell output.
LstmState lstm_cell_step(std::span<const float> x, const LstmState& state,
                         const LstmCellParams& params);

/// Runs each layer over the whole sequence from a zero state. When
/// `bidirectional` is set every layer must carry backward parameters and a
/// projection; forward and backward outputs are concatenated per frame and
/// projected back down before feeding the next layer.
Sequence lstm_stack_forward(const Sequence& sequence, std::span<const LstmLayer> layers,
                            bool bidirectional);

/// Advances a stack of unidirectional layers by one input vector. Layer
/// output transforms are applied between layers. Returns the top output.
Vector lstm_stack_step(std::span<const float> x, std::span<const LstmLayer> layers,
                       std::vector<LstmState>& states);

std::vector<LstmState> zero_states(std::span<const LstmLayer> layers);

}  // namespace ilmfuse
