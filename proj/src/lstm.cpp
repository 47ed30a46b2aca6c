#include "ilmfuse/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ilmfuse/error.hpp"
#include "ilmfuse/kernels.hpp"

namespace ilmfuse {

void LstmCellParams::validate() const {
  if (w_ih.rank() != 2 || w_hh.rank() != 2 || b_ih.rank() != 1 || b_hh.rank() != 1) {
    throw DimensionError("LSTM parameters have wrong rank");
  }
  const auto hidden = w_hh.dim(1);
  if (w_hh.dim(0) != 4 * hidden) throw DimensionError("LSTM recurrent matrix must be [4H, H]");
  if (w_ih.dim(0) != 4 * hidden) throw DimensionError("LSTM input matrix must be [4H, in]");
  if (b_ih.dim(0) != 4 * hidden || b_hh.dim(0) != 4 * hidden) {
    throw DimensionError("LSTM bias must have 4H entries");
  }
}

LstmState LstmState::zeros(std::int64_t hidden) {
  return {Vector(static_cast<std::size_t>(hidden), 0.0f),
          Vector(static_cast<std::size_t>(hidden), 0.0f)};
}

Vector OutputTransform::apply(std::span<const float> x) const {
  Vector y(x.begin(), x.end());
  if (proj_w) {
    y = kernels::affine(y, *proj_w, proj_b ? proj_b->data() : std::span<const float>{});
  }
  if (ln_gamma) y = kernels::layer_norm(y, ln_gamma->data(), ln_beta->data());
  return y;
}

LstmState lstm_cell_step(std::span<const float> x, const LstmState& state,
                         const LstmCellParams& params) {
  const auto hidden = static_cast<std::size_t>(params.hidden_size());
  if (state.h.size() != hidden || state.c.size() != hidden) {
    throw DimensionError("LSTM state size " + std::to_string(state.h.size()) +
                         " does not match hidden size " + std::to_string(hidden));
  }
  auto gates = kernels::affine(x, params.w_ih, params.b_ih.data());
  const auto recurrent = kernels::affine(state.h, params.w_hh, params.b_hh.data());
  for (std::size_t i = 0; i < gates.size(); ++i) gates[i] += recurrent[i];

  LstmState next = LstmState::zeros(static_cast<std::int64_t>(hidden));
  for (std::size_t k = 0; k < hidden; ++k) {
    const float in = kernels::sigmoid(gates[k]);
    const float forget = kernels::sigmoid(gates[hidden + k]);
    const float cand = std::tanh(gates[2 * hidden + k]);
    const float out = kernels::sigmoid(gates[3 * hidden + k]);
    next.c[k] = forget * state.c[k] + in * cand;
    next.h[k] = out * std::tanh(next.c[k]);
  }
  return next;
}

namespace {

Sequence run_direction(const Sequence& input, const LstmCellParams& cell, bool reverse) {
  Sequence out(input.size());
  LstmState state = LstmState::zeros(cell.hidden_size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const std::size_t t = reverse ? input.size() - 1 - i : i;
    state = lstm_cell_step(input[t], state, cell);
    out[t] = state.h;
  }
  return out;
}

}  // namespace

Sequence lstm_stack_forward(const Sequence& sequence, std::span<const LstmLayer> layers,
                            bool bidirectional) {
  if (layers.empty()) throw DimensionError("LSTM stack needs at least one layer");
  if (sequence.empty()) throw DimensionError("LSTM stack input sequence is empty");
  Sequence current = sequence;
  for (const auto& layer : layers) {
    Sequence fwd = run_direction(current, layer.forward, false);
    if (bidirectional) {
      if (!layer.backward || !layer.output.proj_w) {
        throw DimensionError("bidirectional layer needs backward cell and projection");
      }
      Sequence bwd = run_direction(current, *layer.backward, true);
      for (std::size_t t = 0; t < fwd.size(); ++t) {
        fwd[t].insert(fwd[t].end(), bwd[t].begin(), bwd[t].end());
      }
    }
    if (!layer.output.empty()) {
      for (auto& v : fwd) v = layer.output.apply(v);
    }
    current = std::move(fwd);
  }
  return current;
}

Vector lstm_stack_step(std::span<const float> x, std::span<const LstmLayer> layers,
                       std::vector<LstmState>& states) {
  if (states.size() != layers.size()) throw DimensionError("LSTM state count mismatch");
  Vector current(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    states[l] = lstm_cell_step(current, states[l], layers[l].forward);
    current = layers[l].output.empty() ? states[l].h : layers[l].output.apply(states[l].h);
  }
  return current;
}

std::vector<LstmState> zero_states(std::span<const LstmLayer> layers) {
  std::vector<LstmState> states;
  states.reserve(layers.size());
  for (const auto& l : layers) states.push_back(LstmState::zeros(l.forward.hidden_size()));
  return states;
}

}  // namespace ilmfuse
