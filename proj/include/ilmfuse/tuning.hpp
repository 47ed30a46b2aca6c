#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ilmfuse/decode_driver.hpp"

namespace ilmfuse {

/// Inclusive arithmetic range written "start:stop:step".
struct GridAxis {
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;

  /// start, start+step, ... up to stop (inclusive, with a small tolerance
  /// so decimal steps land on stop). Values are rounded to 1e-9.
  std::vector<double> values() const;

  /// Throws ConfigError for malformed text, negative values, step <= 0 or
  /// stop < start. "a:a:step" is a single point.
  static GridAxis parse(std::string_view text);
};

/// Target-LM weights 0, 0.02, ..., 0.40.
GridAxis default_lm_axis();
/// Subtraction weights 0, 0.02, ..., 0.30.
GridAxis default_sub_axis();

struct TunePoint {
  double lm_weight = 0.0;
  double sub_weight = 0.0;
  double wer = 0.0;
};

struct TuneGrid {
  std::vector<double> lm_values;
  std::vector<double> sub_values;  // {0} for shallow_fusion
  std::vector<TunePoint> surface;  // lm-major, ascending
  TunePoint best;                  // lowest WER; ties go to smaller weights
};

/// Decodes `dev` at every grid point and picks the WER-minimal weights.
TuneGrid tune_weights(const UtteranceSet& dev, const DecodeModels& models, FusionMethod method,
                      const std::vector<double>& lm_values, const std::vector<double>& sub_values,
                      const SearchOptions& options, int jobs);

/// Corpus WER of the 1-best outputs against the set's references.
CorpusWer score_results(const UtteranceSet& set, const std::vector<DecodeResult>& results,
                        const Vocabulary& vocab);

/// "lm_weight,sub_weight,wer" header plus one row per point.
std::string surface_csv(const TuneGrid& grid);

}  // namespace ilmfuse
