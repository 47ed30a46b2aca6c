#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ilmfuse {

struct WerCounts {
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;
  std::int64_t ref_words = 0;

  std::int64_t errors() const { return substitutions + insertions + deletions; }
  /// (S + I + D) / N. Throws ContractError when N == 0.
  double wer() const;

  WerCounts& operator+=(const WerCounts& other);
  bool operator==(const WerCounts&) const = default;
};

/// Unit-cost Levenshtein alignment. Among minimum-cost alignments the one
/// with fewest substitutions, then fewest insertions, is reported.
WerCounts wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);

using WordSequence = std::vector<std::string>;

struct CorpusWer {
  WerCounts total;
  std::vector<WerCounts> per_utterance;
  double wer = 0.0;
};

/// Pooled corpus WER: total edits over total reference words.
CorpusWer corpus_wer(const std::vector<std::pair<WordSequence, WordSequence>>& pairs);

/// 100 * (baseline - method) / baseline.
double relative_werr(double baseline_wer, double method_wer);

}  // namespace ilmfuse
