#include "ilmfuse/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ilmfuse/error.hpp"

namespace ilmfuse {

std::vector<double> GridAxis::values() const {
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (long i = 0; i < count; ++i) {
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
  }
  return out;
}

GridAxis GridAxis::parse(std::string_view text) {
  GridAxis axis;
  std::string s(text);
  char tail = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf:%lf%c", &axis.start, &axis.stop, &axis.step, &tail) != 3) {
    throw ConfigError("malformed grid \"" + s + "\", expected start:stop:step");
  }
  if (!std::isfinite(axis.start) || !std::isfinite(axis.stop) || !std::isfinite(axis.step) ||
      axis.start < 0.0 || axis.step <= 0.0 || axis.stop < axis.start) {
    throw ConfigError("invalid grid \"" + s + "\": need 0 <= start <= stop and step > 0");
  }
  return axis;
}

GridAxis default_lm_axis() { return {0.0, 0.40, 0.02}; }
GridAxis default_sub_axis() { return {0.0, 0.30, 0.02}; }

CorpusWer score_results(const UtteranceSet& set, const std::vector<DecodeResult>& results,
                        const Vocabulary& vocab) {
  std::vector<std::pair<WordSequence, WordSequence>> pairs;
  pairs.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    pairs.emplace_back(reference_words(set.utterances[i], vocab), best_words(results[i], vocab));
  }
  return corpus_wer(pairs);
}

TuneGrid tune_weights(const UtteranceSet& dev, const DecodeModels& models, FusionMethod method,
                      const std::vector<double>& lm_values, const std::vector<double>& sub_values,
                      const SearchOptions& options, int jobs) {
  if (method == FusionMethod::kBaseline) throw ConfigError("tuning needs a fusion method");
  if (lm_values.empty() || sub_values.empty()) throw ConfigError("tuning grid is empty");
  if (dev.empty()) throw ContractError("tuning needs a non-empty dev set");

  TuneGrid grid;
  grid.lm_values = lm_values;
  grid.sub_values = method == FusionMethod::kShallowFusion ? std::vector<double>{0.0} : sub_values;
  std::sort(grid.lm_values.begin(), grid.lm_values.end());
  std::sort(grid.sub_values.begin(), grid.sub_values.end());
  const auto& vocab = e2e_vocabulary(models);
  bool have_best = false;
  for (double lm : grid.lm_values) {
    for (double sub : grid.sub_values) {
      const FusionConfig config{method, lm, sub};
      const auto results = decode_set(dev, models, config, options, jobs);
      const TunePoint point{lm, sub, score_results(dev, results, vocab).wer};
      grid.surface.push_back(point);
      if (!have_best || point.wer < grid.best.wer) {
        grid.best = point;
        have_best = true;
      }
    }
  }
  return grid;
}

std::string surface_csv(const TuneGrid& grid) {
  std::ostringstream os;
  os << "lm_weight,sub_weight,wer\n";
  os.precision(10);
  for (const auto& p : grid.surface) os << p.lm_weight << ',' << p.sub_weight << ',' << p.wer << '\n';
  return os.str();
}

}  // namespace ilmfuse
