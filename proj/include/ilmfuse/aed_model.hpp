#pragma once

#include <span>
#include <vector>

#include "ilmfuse/container.hpp"
#include "ilmfuse/lstm.hpp"

namespace ilmfuse {

struct AttentionState {
  std::vector<float> weights;  // length T, sums to 1
  Vector context;              // encoder-output dim

  bool operator==(const AttentionState&) const = default;
};

/// Decoder state before step u: recurrent state after step u-1, the
/// attention produced at step u-1 and the token y_{u-1} to consume next.
struct DecoderState {
  std::vector<LstmState> layers;
  AttentionState attention;
  TokenId last_token = Vocabulary::kSosId;

  bool operator==(const DecoderState&) const = default;
};

/// The decoder run with the context vector removed. It has its own
/// recurrent state, independent of the acoustic decoder's.
struct AedIlmState {
  std::vector<LstmState> layers;
  TokenId last_token = Vocabulary::kSosId;

  bool operator==(const AedIlmState&) const = default;
};

/// Encoder outputs plus the attention keys W_k h_t + b, computed once per
/// utterance.
struct EncoderMemory {
  Sequence values;
  Sequence keys;
};

struct DecoderStepResult {
  Vector logits;       // over |V|, <eos> included
  DecoderState state;  // advanced; `last_token` still the consumed token
};

struct AedIlmStepResult {
  std::vector<double> log_probs;
  AedIlmState state;
};

/// Attention-based encoder-decoder inference over a validated `aed`
/// container. Each decoder step consumes e_{u-1} + c_{u-1}, produces z_u
/// from the new hidden state, and only then attends with that hidden state
/// to produce c_u for the following step. Attention is additive:
/// e_t = v . tanh(W_q h_dec + W_k h_t + b).
class AedModel {
 public:
  explicit AedModel(const ModelContainer& container);

  const Vocabulary& vocabulary() const { return vocab_; }
  std::int64_t feature_dim() const { return feature_dim_; }

  /// Bidirectional stack; every layer concatenates both directions and
  /// projects (then optionally normalizes) before feeding the next.
  Sequence encode(const Tensor& features) const;
  EncoderMemory prepare(Sequence encoded) const;

  /// Zero recurrent state, zero context, uniform attention, <sos>.
  DecoderState initial_state(const EncoderMemory& memory) const;

  AttentionState attention_step(const AttentionState& previous, const EncoderMemory& memory,
                                std::span<const float> h_dec) const;

  DecoderStepResult decoder_step(const DecoderState& state, const EncoderMemory& memory) const;

  /// log P(Y|X), summed over U+1 steps, the last scoring <eos>.
  double sequence_logprob(const Tensor& features, std::span<const TokenId> labels) const;
  double sequence_logprob_memory(const EncoderMemory& memory, std::span<const TokenId> labels) const;

  AedIlmState ilm_initial_state() const;
  AedIlmStepResult ilm_step(const AedIlmState& state) const;
  /// Internal-LM log probability of Y including the final <eos> term.
  double ilm_sequence_logprob(std::span<const TokenId> labels) const;

 private:
  void check_labels(std::span<const TokenId> labels) const;

  Vocabulary vocab_;
  std::int64_t feature_dim_;
  std::vector<LstmLayer> encoder_;
  Tensor embedding_;
  std::vector<LstmLayer> decoder_;
  Tensor w_d_, b_d_;
  Tensor w_q_, w_k_, att_b_, att_v_;
};

}  // namespace ilmfuse
