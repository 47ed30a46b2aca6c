#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ilmfuse/tensor.hpp"
#include "ilmfuse/vocabulary.hpp"

namespace ilmfuse {

/// One manifest record: `{"id": ..., "ref": "tok tok ...", "feat": "path"}`.
/// `ref` may also be a JSON array of token strings. `feat` is resolved
/// relative to the manifest's directory.
struct Utterance {
  std::string id;
  std::vector<std::string> ref_tokens;
  std::string feat_path;  // as written in the manifest
  Tensor features;        // [T, feature_dim]

  bool operator==(const Utterance&) const = default;
};

struct UtteranceSet {
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }
  bool operator==(const UtteranceSet&) const = default;
};

/// Loads the manifest and every referenced feature container. When `vocab`
/// is given, reference tokens are checked against it and an unknown token
/// raises ValidationError carrying the token and its 1-based line number.
/// Blank lines are skipped.
UtteranceSet load_utterance_set(const std::filesystem::path& manifest,
                                const Vocabulary* vocab = nullptr);

struct ReferenceRecord {
  std::string id;
  std::vector<std::string> tokens;
};

/// Reads only `id` and `ref` from a manifest; feature files are neither
/// required nor opened. Used for text-only corpora and WER references.
std::vector<ReferenceRecord> load_references(const std::filesystem::path& manifest,
                                             const Vocabulary* vocab = nullptr);

/// Writes the manifest and one `.cont` feature file per utterance (at the
/// utterance's `feat_path`, relative to the manifest directory).
void save_utterance_set(const UtteranceSet& set, const std::filesystem::path& manifest);

/// Maps reference tokens to ids; throws ValidationError for unknown tokens.
std::vector<TokenId> token_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab);

}  // namespace ilmfuse
