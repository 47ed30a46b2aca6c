#include "ilmfuse/vocabulary.hpp"

#include <string>

#include "ilmfuse/error.hpp"

namespace ilmfuse {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) {
    throw ValidationError("vocabulary needs at least the <sos> and <eos> entries");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ValidationError("duplicate vocabulary token \"" + tokens_[i] + "\"");
    }
    if (tokens_[i].starts_with(kWordBoundary)) word_pieces_ = true;
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!is_regular(id)) throw ContractError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::text(const std::vector<TokenId>& ids) const {
  std::vector<std::string> pieces;
  pieces.reserve(ids.size());
  for (auto id : ids) pieces.push_back(token(id));
  return detokenize(pieces, word_pieces_);
}

std::string detokenize(const std::vector<std::string>& pieces, bool word_pieces) {
  std::string out;
  for (const auto& piece : pieces) {
    if (!word_pieces) {
      if (!out.empty()) out += ' ';
      out += piece;
      continue;
    }
    if (piece.starts_with(kWordBoundary)) {
      if (!out.empty()) out += ' ';
      out += piece.substr(kWordBoundary.size());
    } else {
      out += piece;
    }
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n')) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\n') ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

}  // namespace ilmfuse
