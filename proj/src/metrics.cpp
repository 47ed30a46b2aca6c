#include "ilmfuse/metrics.hpp"

#include <tuple>

#include "ilmfuse/error.hpp"

namespace ilmfuse {

double WerCounts::wer() const {
  if (ref_words <= 0) throw ContractError("WER is undefined for an empty reference");
  return static_cast<double>(errors()) / static_cast<double>(ref_words);
}

WerCounts& WerCounts::operator+=(const WerCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  ref_words += o.ref_words;
  return *this;
}

WerCounts wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  // Cells hold (cost, substitutions, insertions, deletions); tuples compare
  // lexicographically and the order is preserved under addition, so the DP
  // minimum is the preferred alignment.
  using Cell = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>;
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<Cell> prev(m + 1);
  std::vector<Cell> cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, j, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {i, 0, 0, i};
    for (std::size_t j = 1; j <= m; ++j) {
      auto [dc, ds, di, dd] = prev[j];
      Cell best{dc + 1, ds, di, dd + 1};  // deletion
      auto [ic, is, ii, id] = cur[j - 1];
      best = std::min(best, Cell{ic + 1, is, ii + 1, id});  // insertion
      auto [mc, ms, mi, md] = prev[j - 1];
      const bool same = ref[i - 1] == hyp[j - 1];
      best = std::min(best, Cell{mc + (same ? 0 : 1), ms + (same ? 0 : 1), mi, md});
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const auto& [cost, subs, ins, dels] = prev[m];
  return {subs, ins, dels, static_cast<std::int64_t>(n)};
}

CorpusWer corpus_wer(const std::vector<std::pair<WordSequence, WordSequence>>& pairs) {
  CorpusWer out;
  for (const auto& [ref, hyp] : pairs) {
    out.per_utterance.push_back(wer(ref, hyp));
    out.total += out.per_utterance.back();
  }
  if (out.total.ref_words == 0) {
    throw ContractError("corpus WER needs at least one non-empty reference");
  }
  out.wer = out.total.wer();
  return out;
}

double relative_werr(double baseline_wer, double method_wer) {
  if (!(baseline_wer > 0.0)) throw ContractError("relative WERR needs a positive baseline WER");
  return 100.0 * (baseline_wer - method_wer) / baseline_wer;
}

}  // namespace ilmfuse
