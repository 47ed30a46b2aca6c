#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ilmfuse {

using TokenId = std::int32_t;

/// Token inventory shared by every model in a run. Ids 0 and 1 are
/// reserved for <sos> and <eos>. The RNN-T blank is not a token string; it
/// is the extra output row at index |V|.
class Vocabulary {
 public:
  static constexpr TokenId kSosId = 0;
  static constexpr TokenId kEosId = 1;

  Vocabulary() = default;
  /// Throws ValidationError on duplicate strings or fewer than 2 tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }
  bool empty() const { return tokens_.empty(); }
  TokenId sos_id() const { return kSosId; }
  TokenId eos_id() const { return kEosId; }
  TokenId blank_id() const { return size(); }

  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool is_regular(TokenId id) const { return id >= 0 && id < size(); }

  /// True when some token carries the word-boundary marker, i.e. the
  /// inventory is made of word pieces rather than whole words.
  bool has_word_pieces() const { return word_pieces_; }

  /// Token strings for `ids` joined into words (see `detokenize`).
  std::string text(const std::vector<TokenId>& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  bool word_pieces_ = false;
};

/// Word-piece marker: a piece starting with U+2581 begins a new word.
inline constexpr std::string_view kWordBoundary = "\xE2\x96\x81";

/// Joins pieces into whitespace-separated words. With `word_pieces` set, a
/// piece starting with the boundary marker opens a new word (the marker is
/// dropped) and any other piece is glued to the previous one. Without it
/// every piece is its own word.
std::string detokenize(const std::vector<std::string>& pieces, bool word_pieces);

std::vector<std::string> split_words(std::string_view text);

}  // namespace ilmfuse
