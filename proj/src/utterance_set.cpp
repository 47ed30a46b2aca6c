#include "ilmfuse/utterance_set.hpp"

#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ilmfuse/container.hpp"
#include "ilmfuse/error.hpp"

namespace ilmfuse {

UtteranceSet load_utterance_set(const std::filesystem::path& manifest, const Vocabulary* vocab) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();

  UtteranceSet set;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    Utterance utt;
    try {
      const auto rec = nlohmann::json::parse(line);
      utt.id = rec.at("id").get<std::string>();
      const auto& ref = rec.at("ref");
      utt.ref_tokens = ref.is_array() ? ref.get<std::vector<std::string>>()
                                      : split_words(ref.get<std::string>());
      utt.feat_path = rec.at("feat").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": malformed manifest record: " + e.what());
    }
    if (!seen.insert(utt.id).second) throw ValidationError(where + ": duplicate id " + utt.id);
    if (vocab) {
      for (const auto& tok : utt.ref_tokens) {
        if (!vocab->find(tok)) {
          throw ValidationError(where + ": out-of-vocabulary reference token \"" + tok + "\"");
        }
      }
    }
    const auto feat_file = base / utt.feat_path;
    if (!std::filesystem::exists(feat_file)) {
      throw IoError(where + ": missing feature file " + feat_file.string());
    }
    auto c = load_container(feat_file);
    if (c.kind != ModelKind::kFeatures) {
      throw ValidationError(where + ": " + feat_file.string() + " is not a feature container");
    }
    utt.features = std::move(c.tensors.at("features"));
    set.utterances.push_back(std::move(utt));
  }
  return set;
}

std::vector<ReferenceRecord> load_references(const std::filesystem::path& manifest,
                                             const Vocabulary* vocab) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::vector<ReferenceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    ReferenceRecord rec;
    try {
      const auto j = nlohmann::json::parse(line);
      rec.id = j.at("id").get<std::string>();
      const auto& ref = j.at("ref");
      rec.tokens = ref.is_array() ? ref.get<std::vector<std::string>>()
                                  : split_words(ref.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": malformed manifest record: " + e.what());
    }
    if (vocab) {
      for (const auto& tok : rec.tokens) {
        if (!vocab->find(tok)) {
          throw ValidationError(where + ": out-of-vocabulary reference token \"" + tok + "\"");
        }
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_utterance_set(const UtteranceSet& set, const std::filesystem::path& manifest) {
  const auto base = manifest.parent_path();
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + manifest.string());
  for (const auto& utt : set.utterances) {
    const auto feat = base / utt.feat_path;
    std::error_code ec;
    std::filesystem::create_directories(feat.parent_path(), ec);
    if (ec) throw IoError("cannot create " + feat.parent_path().string() + ": " + ec.message());
    save_container(make_feature_container(utt.features), feat);
    nlohmann::json rec;
    rec["id"] = utt.id;
    rec["ref"] = utt.ref_tokens;
    rec["feat"] = utt.feat_path;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + manifest.string());
}

std::vector<TokenId> token_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto id = vocab.find(t);
    if (!id) throw ValidationError("out-of-vocabulary token \"" + t + "\"");
    ids.push_back(*id);
  }
  return ids;
}

}  // namespace ilmfuse
