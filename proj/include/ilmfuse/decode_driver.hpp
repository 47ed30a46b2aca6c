#pragma once

#include <string>
#include <vector>

#include "ilmfuse/beam_search.hpp"
#include "ilmfuse/metrics.hpp"
#include "ilmfuse/utterance_set.hpp"

namespace ilmfuse {

/// Decodes with whichever E2E model `models` carries.
DecodeResult decode_features(const Tensor& features, const DecodeModels& models,
                             const FusionConfig& config, const SearchOptions& options);

/// Decodes every utterance, `jobs` at a time. Results are in manifest
/// order and do not depend on `jobs`. A failing utterance aborts the whole
/// call with an error naming its id (the first failing one in manifest
/// order). Traces are not supported here.
std::vector<DecodeResult> decode_set(const UtteranceSet& set, const DecodeModels& models,
                                     const FusionConfig& config, const SearchOptions& options,
                                     int jobs);

/// The vocabulary of the E2E model in `models`.
const Vocabulary& e2e_vocabulary(const DecodeModels& models);

/// One JSON object per n-best entry:
/// {"id","rank","tokens","text","fused","e2e","ext_lm","sub_lm"}; rank is 1-based.
std::string nbest_jsonl(const UtteranceSet& set, const std::vector<DecodeResult>& results,
                        const Vocabulary& vocab);

/// Reference words of an utterance after detokenization.
WordSequence reference_words(const Utterance& utt, const Vocabulary& vocab);
/// 1-best words, empty if the n-best is empty.
WordSequence best_words(const DecodeResult& result, const Vocabulary& vocab);

}  // namespace ilmfuse
