#include "ilmfuse/decode_driver.hpp"

#include <exception>
#include <optional>

#include <nlohmann/json.hpp>

#include "ilmfuse/error.hpp"

namespace ilmfuse {

DecodeResult decode_features(const Tensor& features, const DecodeModels& models,
                             const FusionConfig& config, const SearchOptions& options) {
  if (models.rnnt) return beam_search_rnnt(features, models, config, options);
  if (models.aed) return beam_search_aed(features, models, config, options);
  throw ContractError("no E2E model loaded");
}

const Vocabulary& e2e_vocabulary(const DecodeModels& models) {
  if (models.rnnt) return models.rnnt->vocabulary();
  if (models.aed) return models.aed->vocabulary();
  throw ContractError("no E2E model loaded");
}

namespace {

// Rethrows `error` as the same category with the utterance id prefixed.
[[noreturn]] void rethrow_with_id(const std::exception_ptr& error, const std::string& id) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    throw ConfigError("utterance " + id + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError("utterance " + id + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("utterance " + id + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError("utterance " + id + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError("utterance " + id + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("utterance " + id + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("utterance " + id + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error("utterance " + id + ": " + e.what());
  }
}

}  // namespace

std::vector<DecodeResult> decode_set(const UtteranceSet& set, const DecodeModels& models,
                                     const FusionConfig& config, const SearchOptions& options,
                                     int jobs) {
  validate_config(config, models.roles());
  if (jobs < 1) throw ContractError("jobs must be at least 1");
  SearchOptions opts = options;
  opts.trace = nullptr;

  const auto n = static_cast<std::int64_t>(set.size());
  std::vector<DecodeResult> results(set.size());
  std::vector<std::exception_ptr> errors(set.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      results[i] = decode_features(set.utterances[i].features, models, config, opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i]) rethrow_with_id(errors[i], set.utterances[i].id);
  }
  return results;
}

std::string nbest_jsonl(const UtteranceSet& set, const std::vector<DecodeResult>& results,
                        const Vocabulary& vocab) {
  if (results.size() != set.size()) throw ContractError("result count does not match the set");
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    int rank = 1;
    for (const auto& h : results[i].nbest) {
      std::vector<std::string> pieces;
      for (auto id : h.tokens) pieces.push_back(vocab.token(id));
      nlohmann::ordered_json rec;
      rec["id"] = set.utterances[i].id;
      rec["rank"] = rank++;
      rec["tokens"] = pieces;
      rec["text"] = detokenize(pieces, vocab.has_word_pieces());
      rec["fused"] = h.fused;
      rec["e2e"] = h.e2e;
      rec["ext_lm"] = h.ext_lm;
      rec["sub_lm"] = h.sub_lm;
      out += rec.dump();
      out += '\n';
    }
  }
  return out;
}

WordSequence reference_words(const Utterance& utt, const Vocabulary& vocab) {
  return split_words(detokenize(utt.ref_tokens, vocab.has_word_pieces()));
}

WordSequence best_words(const DecodeResult& result, const Vocabulary& vocab) {
  if (result.nbest.empty()) return {};
  return split_words(vocab.text(result.nbest.front().tokens));
}

}  // namespace ilmfuse
