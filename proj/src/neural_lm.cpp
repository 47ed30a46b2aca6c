#include "ilmfuse/neural_lm.hpp"

#include <cmath>
#include <string>

#include "ilmfuse/aed_model.hpp"
#include "ilmfuse/error.hpp"
#include "ilmfuse/kernels.hpp"
#include "ilmfuse/rnnt_model.hpp"

namespace ilmfuse {

NeuralLm::NeuralLm(const ModelContainer& c) {
  if (c.kind != ModelKind::kLm) {
    throw ContractError("expected an lm container, got " + model_kind_name(c.kind));
  }
  validate_container(c);
  vocab_ = c.vocabulary;
  embedding_ = c.tensor("lm.embed");
  for (std::int64_t k = 0; k < c.hp_int("layers"); ++k) {
    layers_.push_back({load_cell(c, "lm.l" + std::to_string(k)), std::nullopt, {}});
  }
  if (c.hp_int("proj_dim") > 0) {
    projection_.proj_w = c.tensor("lm.proj.W");
    projection_.proj_b = c.tensor("lm.proj.b");
  }
  w_out_ = c.hp_bool("tied_embeddings", false) ? embedding_ : c.tensor("lm.W_out");
  b_out_ = c.tensor("lm.b_out");
}

LmState NeuralLm::initial_state() const { return {zero_states(layers_), vocab_.sos_id()}; }

LmStepResult NeuralLm::step(const LmState& state) const {
  if (!vocab_.is_regular(state.last_token)) throw ContractError("LM token out of range");
  LmStepResult r;
  r.state.layers = state.layers;
  r.state.last_token = state.last_token;
  auto top = lstm_stack_step(embedding_.row(state.last_token), layers_, r.state.layers);
  if (!projection_.empty()) top = projection_.apply(top);
  r.log_probs = kernels::log_softmax(kernels::affine(top, w_out_, b_out_.data()));
  return r;
}

double NeuralLm::sequence_logprob(std::span<const TokenId> labels, bool include_eos) const {
  double total = 0.0;
  LmState state = initial_state();
  const std::size_t steps = labels.size() + (include_eos ? 1 : 0);
  for (std::size_t u = 0; u < steps; ++u) {
    auto r = step(state);
    const TokenId y = u < labels.size() ? labels[u] : vocab_.eos_id();
    if (!vocab_.is_regular(y)) throw ContractError("label out of range");
    total += r.log_probs[y];
    state = std::move(r.state);
    state.last_token = y;
  }
  return total;
}

double LmScorer::sequence_logprob(std::span<const TokenId> labels) const {
  return lm_.sequence_logprob(labels, include_eos_);
}

double RnntIlmScorer::sequence_logprob(std::span<const TokenId> labels) const {
  return model_.ilm_sequence_logprob(labels);
}

double AedIlmScorer::sequence_logprob(std::span<const TokenId> labels) const {
  return model_.ilm_sequence_logprob(labels);
}

double UniformScorer::sequence_logprob(std::span<const TokenId> labels) const {
  const auto n = static_cast<double>(labels.size() + (include_eos_ ? 1 : 0));
  return -n * std::log(static_cast<double>(vocab_size_));
}

PerplexityReport perplexity(const std::vector<std::vector<TokenId>>& corpus,
                            const SequenceScorer& scorer) {
  if (corpus.empty()) throw ContractError("perplexity of an empty corpus");
  PerplexityReport report;
  // Neumaier-compensated sum; long corpora otherwise drift by many ulps.
  double sum = 0.0;
  double carry = 0.0;
  for (const auto& sentence : corpus) {
    const auto scored = static_cast<std::int64_t>(sentence.size()) + (scorer.scores_eos() ? 1 : 0);
    if (scored == 0) {
      throw ContractError("empty sentence contributes no scored tokens without <eos>");
    }
    const double lp = scorer.sequence_logprob(sentence);
    const double t = sum + lp;
    carry += std::abs(sum) >= std::abs(lp) ? (sum - t) + lp : (lp - t) + sum;
    sum = t;
    report.token_count += scored;
  }
  report.log_prob_sum = sum + carry;
  report.ppl = std::exp(-report.log_prob_sum / static_cast<double>(report.token_count));
  require_finite(std::span<const double>(&report.ppl, 1), "perplexity");
  return report;
}

}  // namespace ilmfuse
