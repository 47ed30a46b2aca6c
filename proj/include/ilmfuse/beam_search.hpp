#pragma once

#include <vector>

#include "ilmfuse/aed_model.hpp"
#include "ilmfuse/fusion.hpp"
#include "ilmfuse/neural_lm.hpp"
#include "ilmfuse/rnnt_model.hpp"

namespace ilmfuse {

/// Non-owning view of the models taking part in one decode.
struct DecodeModels {
  const RnntModel* rnnt = nullptr;
  const AedModel* aed = nullptr;
  const NeuralLm* target_lm = nullptr;
  const NeuralLm* source_lm = nullptr;

  LoadedRoles roles() const { return {target_lm != nullptr, source_lm != nullptr}; }
};

/// A label sequence with its cumulative component scores. `fused` is always
/// fuse_step applied to the three cumulative components, so it can be
/// recomputed from them exactly.
struct Hypothesis {
  std::vector<TokenId> tokens;
  double fused = 0.0;
  double e2e = 0.0;
  double ext_lm = 0.0;
  double sub_lm = 0.0;

  bool operator==(const Hypothesis&) const = default;
};

struct DecodeResult {
  std::vector<Hypothesis> nbest;  // best first, at most `beam` entries
  double seconds = 0.0;
};

/// One scored expansion, recorded when a trace is requested. `position` is
/// the frame (RNN-T) or label step (AED), both 0-based. For RNN-T blanks
/// `token` is the blank id. `fused_before`/`fused_after` are the
/// hypothesis' fused score before the step and after it, before any merge.
struct StepRecord {
  int position = 0;
  std::vector<TokenId> prefix;
  TokenId token = 0;
  bool is_blank = false;
  StepScores scores;
  double fused_before = 0.0;
  double fused_after = 0.0;
};

struct SearchOptions {
  int beam = 25;
  /// RNN-T: consecutive emissions allowed within one frame.
  int max_symbols_per_frame = 5;
  /// AED: longest label sequence; the step after it may only emit <eos>.
  /// Zero means "number of encoder frames".
  int max_len = 0;
  /// Rank the final n-best by fused / max(1, |Y|). Off by default.
  bool length_normalize = false;
  std::vector<StepRecord>* trace = nullptr;
};

/// Frame-synchronous transducer search. Within a frame, hypotheses are
/// expanded in order of label length; a label sequence reached by several
/// alignments is kept once with its E2E scores combined by log-sum-exp.
/// Blank expansions carry the E2E blank score only.
DecodeResult beam_search_rnnt(const Tensor& features, const DecodeModels& models,
                              const FusionConfig& config, const SearchOptions& options);

/// Label-synchronous attention decoder search; <eos> finishes a
/// hypothesis and receives full fusion treatment.
DecodeResult beam_search_aed(const Tensor& features, const DecodeModels& models,
                             const FusionConfig& config, const SearchOptions& options);

/// Scores one label sequence from scratch with the sequence-level formulas
/// (full alignment sum for RNN-T, <eos>-terminated for AED). Components a
/// method does not use are left at zero, as in the searches.
Hypothesis rescore_rnnt(const Sequence& encoded, const std::vector<TokenId>& labels,
                        const DecodeModels& models, const FusionConfig& config);
Hypothesis rescore_aed(const EncoderMemory& memory, const std::vector<TokenId>& labels,
                       const DecodeModels& models, const FusionConfig& config);

/// Exhaustive argmax over every label sequence of length <= `u_cap` built
/// from the search candidates. Budget: candidates^u_cap * C(T+u_cap, u_cap)
/// must not exceed 1e6.
Hypothesis exhaustive_search_rnnt(const Tensor& features, const DecodeModels& models,
                                  const FusionConfig& config, int u_cap);
Hypothesis exhaustive_search_aed(const Tensor& features, const DecodeModels& models,
                                 const FusionConfig& config, int max_len);

/// Tokens the RNN-T search may emit: every regular id except <sos>/<eos>.
std::vector<TokenId> rnnt_candidates(const Vocabulary& vocab);
/// Tokens the AED search may emit: every regular id except <sos>.
std::vector<TokenId> aed_candidates(const Vocabulary& vocab);

/// Higher fused score first, ties broken by lexicographic token order.
bool hypothesis_before(const Hypothesis& a, const Hypothesis& b);

}  // namespace ilmfuse
