#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ilmfuse/container.hpp"
#include "ilmfuse/kernels.hpp"
#include "ilmfuse/lstm.hpp"

namespace ilmfuse {

/// Prediction-network state for one label prefix.
///
/// `layers` is the recurrent state after consuming every token up to and
/// including `last_token`; `h_pred` is the network output for that prefix.
/// A fresh state (see `RnntModel::zero_state`) has `last_token == <sos>`
/// and an empty `h_pred`, meaning <sos> has not been consumed yet.
struct PredictionState {
  std::vector<LstmState> layers;
  TokenId last_token = Vocabulary::kSosId;
  Vector h_pred;

  bool operator==(const PredictionState&) const = default;
};

/// RNN transducer inference over a validated `rnnt` container.
///
/// The joint network is z = W_j phi(f + g) + b_j with the acoustic term
/// f = W_e h_enc + b_e and the language term g = W_p h_pred + b_p. The
/// internal-LM estimate drops f entirely (bias included), removes the blank
/// row from the logits and renormalizes over the |V| regular tokens.
class RnntModel {
 public:
  /// Labels allowed per frame when scoring a fixed label sequence.
  static constexpr int kMaxLabelsPerFrame = 8;
  /// Enumeration cap for the brute-force alignment sum.
  static constexpr int kBruteForceCap = 14;

  explicit RnntModel(const ModelContainer& container);

  const Vocabulary& vocabulary() const { return vocab_; }
  TokenId blank_id() const { return vocab_.blank_id(); }
  std::int64_t feature_dim() const { return feature_dim_; }
  kernels::Activation activation() const { return activation_; }

  /// H_enc for a [T, feature_dim] feature matrix. Unidirectional, so the
  /// output at frame t depends on frames 1..t only.
  Sequence encode(const Tensor& features) const;

  /// f_t = W_e h_enc_t + b_e for every frame.
  Sequence acoustic_terms(const Sequence& encoded) const;
  /// g = W_p h_pred + b_p.
  Vector language_term(std::span<const float> h_pred) const;

  PredictionState zero_state() const;
  /// Prediction state after consuming <sos>.
  PredictionState initial_state() const;

  /// Consumes `prev_token` (never blank) and returns the new output with
  /// the advanced state.
  std::pair<Vector, PredictionState> prediction_step(TokenId prev_token,
                                                     const PredictionState& state) const;

  /// Logits over V + blank (blank last).
  Vector joint_step(std::span<const float> h_enc, std::span<const float> h_pred) const;
  /// Same, from precomputed f and g.
  Vector joint_from_terms(std::span<const float> acoustic, std::span<const float> language) const;

  /// softmax(joint_step(...)).
  std::vector<double> step_distribution(std::span<const float> h_enc,
                                        std::span<const float> h_pred) const;

  /// log P(Y|X) by the forward recursion over the alignment lattice.
  double sequence_logprob(const Tensor& features, std::span<const TokenId> labels) const;
  /// Same quantity from already encoded frames.
  double sequence_logprob_encoded(const Sequence& encoded, std::span<const TokenId> labels) const;

  /// log P(Y|X) by explicit enumeration of every alignment path. Requires
  /// T + U <= kBruteForceCap.
  double bruteforce_logprob(const Tensor& features, std::span<const TokenId> labels) const;

  /// Internal-LM distribution over the |V| regular tokens for the prefix
  /// represented by `state` (which must have consumed <sos>).
  std::vector<double> ilm_step(const PredictionState& state) const;
  std::vector<double> ilm_log_probs(std::span<const float> language_term) const;

  /// Sum of internal-LM log probabilities of Y, no end-of-sentence term.
  double ilm_sequence_logprob(std::span<const TokenId> labels) const;

 private:
  void check_labels(std::span<const TokenId> labels) const;
  Vector joint_hidden_to_logits(Vector hidden) const;

  Vocabulary vocab_;
  std::int64_t feature_dim_;
  kernels::Activation activation_;
  std::vector<LstmLayer> encoder_;
  OutputTransform encoder_out_;
  Tensor embedding_;
  std::vector<LstmLayer> prediction_;
  OutputTransform prediction_out_;
  Tensor w_e_, b_e_, w_p_, b_p_, w_j_, b_j_;
};

/// Number of alignment paths for T frames and U labels: C(T - 1 + U, U).
std::uint64_t rnnt_alignment_count(int frames, int labels);

/// Feature rows as a Sequence; throws DimensionError if `dim` disagrees.
Sequence feature_rows(const Tensor& features, std::int64_t dim);

/// Cell parameters stored under `<prefix>.W_ih` etc.
LstmCellParams load_cell(const ModelContainer& c, const std::string& prefix);

}  // namespace ilmfuse
