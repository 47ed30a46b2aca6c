#include "ilmfuse/aed_model.hpp"

#include <cmath>
#include <string>

#include "ilmfuse/error.hpp"
#include "ilmfuse/kernels.hpp"
#include "ilmfuse/rnnt_model.hpp"

namespace ilmfuse {

AedModel::AedModel(const ModelContainer& c) {
  if (c.kind != ModelKind::kAed) {
    throw ContractError("expected an aed container, got " + model_kind_name(c.kind));
  }
  validate_container(c);
  vocab_ = c.vocabulary;
  feature_dim_ = c.hp_int("feature_dim");
  for (std::int64_t k = 0; k < c.hp_int("enc_layers"); ++k) {
    const std::string p = "enc.l" + std::to_string(k);
    LstmLayer layer{load_cell(c, p + ".fwd"), load_cell(c, p + ".bwd"), {}};
    layer.output.proj_w = c.tensor(p + ".proj.W");
    layer.output.proj_b = c.tensor(p + ".proj.b");
    if (c.has(p + ".ln.gamma")) {
      layer.output.ln_gamma = c.tensor(p + ".ln.gamma");
      layer.output.ln_beta = c.tensor(p + ".ln.beta");
    }
    encoder_.push_back(std::move(layer));
  }
  embedding_ = c.tensor("dec.embed");
  for (std::int64_t k = 0; k < c.hp_int("dec_layers"); ++k) {
    decoder_.push_back({load_cell(c, "dec.l" + std::to_string(k)), std::nullopt, {}});
  }
  w_d_ = c.tensor("dec.W_d");
  b_d_ = c.tensor("dec.b_d");
  w_q_ = c.tensor("att.W_q");
  w_k_ = c.tensor("att.W_k");
  att_b_ = c.tensor("att.b");
  att_v_ = c.tensor("att.v");
}

Sequence AedModel::encode(const Tensor& features) const {
  return lstm_stack_forward(feature_rows(features, feature_dim_), encoder_, true);
}

EncoderMemory AedModel::prepare(Sequence encoded) const {
  if (encoded.empty()) throw ContractError("encoder memory needs at least one frame");
  EncoderMemory m;
  m.keys.reserve(encoded.size());
  for (const auto& h : encoded) m.keys.push_back(kernels::affine(h, w_k_, att_b_.data()));
  m.values = std::move(encoded);
  return m;
}

DecoderState AedModel::initial_state(const EncoderMemory& memory) const {
  DecoderState s;
  s.layers = zero_states(decoder_);
  const auto T = memory.values.size();
  s.attention.weights.assign(T, 1.0f / static_cast<float>(T));
  s.attention.context.assign(memory.values.front().size(), 0.0f);
  s.last_token = vocab_.sos_id();
  return s;
}

AttentionState AedModel::attention_step(const AttentionState& /*previous*/,
                                        const EncoderMemory& memory,
                                        std::span<const float> h_dec) const {
  if (memory.values.empty()) throw ContractError("attention over an empty encoder memory");
  const auto query = kernels::affine(h_dec, w_q_, {});
  const auto v = att_v_.data();
  std::vector<double> energies(memory.keys.size());
  for (std::size_t t = 0; t < memory.keys.size(); ++t) {
    double e = 0.0;
    for (std::size_t a = 0; a < query.size(); ++a) {
      e += static_cast<double>(v[a]) * std::tanh(query[a] + memory.keys[t][a]);
    }
    energies[t] = e;
  }
  const auto weights = kernels::softmax(std::span<const double>(energies));

  AttentionState out;
  out.weights.assign(weights.begin(), weights.end());
  const auto dim = memory.values.front().size();
  std::vector<double> ctx(dim, 0.0);
  for (std::size_t t = 0; t < memory.values.size(); ++t) {
    for (std::size_t k = 0; k < dim; ++k) ctx[k] += weights[t] * memory.values[t][k];
  }
  out.context.assign(ctx.begin(), ctx.end());
  return out;
}

DecoderStepResult AedModel::decoder_step(const DecoderState& state,
                                         const EncoderMemory& memory) const {
  if (!vocab_.is_regular(state.last_token)) throw ContractError("decoder token out of range");
  DecoderStepResult r;
  r.state.layers = state.layers;
  r.state.last_token = state.last_token;
  const auto input = kernels::add(embedding_.row(state.last_token), state.attention.context);
  const auto h_dec = lstm_stack_step(input, decoder_, r.state.layers);
  r.logits = kernels::affine(h_dec, w_d_, b_d_.data());
  require_finite(r.logits, "decoder logits");
  r.state.attention = attention_step(state.attention, memory, h_dec);
  return r;
}

void AedModel::check_labels(std::span<const TokenId> labels) const {
  for (auto y : labels) {
    if (!vocab_.is_regular(y)) {
      throw ContractError("label " + std::to_string(y) + " is not a regular token");
    }
  }
}

double AedModel::sequence_logprob(const Tensor& features, std::span<const TokenId> labels) const {
  return sequence_logprob_memory(prepare(encode(features)), labels);
}

double AedModel::sequence_logprob_memory(const EncoderMemory& memory,
                                         std::span<const TokenId> labels) const {
  check_labels(labels);
  double total = 0.0;
  DecoderState state = initial_state(memory);
  for (std::size_t u = 0; u <= labels.size(); ++u) {
    auto step = decoder_step(state, memory);
    const TokenId y = u < labels.size() ? labels[u] : vocab_.eos_id();
    total += kernels::log_softmax(step.logits)[y];
    state = std::move(step.state);
    state.last_token = y;
  }
  return total;
}

AedIlmState AedModel::ilm_initial_state() const {
  return {zero_states(decoder_), vocab_.sos_id()};
}

AedIlmStepResult AedModel::ilm_step(const AedIlmState& state) const {
  if (!vocab_.is_regular(state.last_token)) throw ContractError("decoder token out of range");
  AedIlmStepResult r;
  r.state.layers = state.layers;
  r.state.last_token = state.last_token;
  const auto h_dec = lstm_stack_step(embedding_.row(state.last_token), decoder_, r.state.layers);
  const auto logits = kernels::affine(h_dec, w_d_, b_d_.data());
  r.log_probs = kernels::log_softmax(logits);
  return r;
}

double AedModel::ilm_sequence_logprob(std::span<const TokenId> labels) const {
  check_labels(labels);
  double total = 0.0;
  AedIlmState state = ilm_initial_state();
  for (std::size_t u = 0; u <= labels.size(); ++u) {
    auto step = ilm_step(state);
    const TokenId y = u < labels.size() ? labels[u] : vocab_.eos_id();
    total += step.log_probs[y];
    state = std::move(step.state);
    state.last_token = y;
  }
  return total;
}

}  // namespace ilmfuse
