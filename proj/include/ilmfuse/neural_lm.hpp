#pragma once

#include <span>
#include <string>
#include <vector>

#include "ilmfuse/container.hpp"
#include "ilmfuse/lstm.hpp"

namespace ilmfuse {

class RnntModel;
class AedModel;

/// LSTM-LM state: recurrent state after all tokens before `last_token`,
/// which is consumed by the next step.
struct LmState {
  std::vector<LstmState> layers;
  TokenId last_token = Vocabulary::kSosId;

  bool operator==(const LmState&) const = default;
};

struct LmStepResult {
  std::vector<double> log_probs;  // over |V|, <eos> included
  LmState state;                  // advanced; set `last_token` before reuse
};

/// Recurrent word-piece LM: embedding, LSTM stack, optional projection,
/// output layer (optionally tied to the embedding), exact log-softmax.
class NeuralLm {
 public:
  explicit NeuralLm(const ModelContainer& container);

  const Vocabulary& vocabulary() const { return vocab_; }

  LmState initial_state() const;
  LmStepResult step(const LmState& state) const;

  /// Chain of step scores for Y; appends log P(<eos>|Y) when `include_eos`.
  double sequence_logprob(std::span<const TokenId> labels, bool include_eos) const;

 private:
  Vocabulary vocab_;
  Tensor embedding_;
  std::vector<LstmLayer> layers_;
  OutputTransform projection_;
  Tensor w_out_;
  Tensor b_out_;
};

/// Anything that assigns a left-to-right log probability to a token
/// sequence. Used by perplexity so that external LMs and internal-LM
/// estimates are measured the same way.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual std::string name() const = 0;
  /// Whether the scorer's sequence score includes an <eos> term.
  virtual bool scores_eos() const = 0;
  virtual double sequence_logprob(std::span<const TokenId> labels) const = 0;
};

class LmScorer : public SequenceScorer {
 public:
  LmScorer(const NeuralLm& lm, bool include_eos) : lm_(lm), include_eos_(include_eos) {}
  std::string name() const override { return "lm"; }
  bool scores_eos() const override { return include_eos_; }
  double sequence_logprob(std::span<const TokenId> labels) const override;

 private:
  const NeuralLm& lm_;
  bool include_eos_;
};

/// RNN-T internal LM; the transducer has no <eos>, so none is scored.
class RnntIlmScorer : public SequenceScorer {
 public:
  explicit RnntIlmScorer(const RnntModel& model) : model_(model) {}
  std::string name() const override { return "rnnt-ilm"; }
  bool scores_eos() const override { return false; }
  double sequence_logprob(std::span<const TokenId> labels) const override;

 private:
  const RnntModel& model_;
};

class AedIlmScorer : public SequenceScorer {
 public:
  explicit AedIlmScorer(const AedModel& model) : model_(model) {}
  std::string name() const override { return "aed-ilm"; }
  bool scores_eos() const override { return true; }
  double sequence_logprob(std::span<const TokenId> labels) const override;

 private:
  const AedModel& model_;
};

/// Assigns log(1/|V|) to every scored token.
class UniformScorer : public SequenceScorer {
 public:
  UniformScorer(std::int64_t vocab_size, bool include_eos)
      : vocab_size_(vocab_size), include_eos_(include_eos) {}
  std::string name() const override { return "uniform"; }
  bool scores_eos() const override { return include_eos_; }
  double sequence_logprob(std::span<const TokenId> labels) const override;

 private:
  std::int64_t vocab_size_;
  bool include_eos_;
};

struct PerplexityReport {
  double log_prob_sum = 0.0;
  std::int64_t token_count = 0;  // includes one <eos> per sentence when scored
  double ppl = 0.0;
};

/// exp(-sum log P / scored tokens). The corpus must be non-empty and every
/// sentence must contribute at least one scored token.
PerplexityReport perplexity(const std::vector<std::vector<TokenId>>& corpus,
                            const SequenceScorer& scorer);

}  // namespace ilmfuse
