#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emoctx/labels.hpp"

namespace emoctx {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kEosId = 2;
inline constexpr std::size_t kNumSpecialTokens = 3;

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

struct Conversation {
  std::string id;
  std::array<std::string, 3> turns;
  std::optional<Emotion> label;
};

struct TokenSequence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::size_t> ids;  // filled by encode_ids
  std::optional<Emotion> label;

  std::size_t n() const { return tokens.size(); }
};

class Vocabulary {
 public:
  // Specials only: <pad>=0, <unk>=1, <eos>=2.
  Vocabulary();

  // Returns the id of `token`, adding it when new.
  std::size_t add(std::string_view token);
  // Id of `token`, or kUnkId when unknown.
  std::size_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::unordered_map<std::string, std::size_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Collapses runs of one repeated ASCII punctuation character and runs of
// whitespace, then trims.
std::string clean_text(std::string_view raw);

// Lowercasing rule-based tokenizer: whitespace split, ASCII punctuation as
// separate tokens, English contraction suffixes ('m 's 're 've 'll 'd n't)
// split off, emoji and pictographs as standalone tokens.
std::vector<std::string> tokenize(std::string_view text);

// turn1 <eos> turn2 <eos> turn3, each turn cleaned and tokenized.
TokenSequence assemble_input(const Conversation& conv);

// Drops training sequences longer than `max_tokens`; other splits pass through.
std::vector<TokenSequence> filter_long(std::vector<TokenSequence> seqs, std::size_t max_tokens,
                                       Split split);

// Every distinct training token, ids assigned in first-occurrence order.
Vocabulary build_vocab(std::span<const TokenSequence> train_sequences);

TokenSequence encode_ids(TokenSequence seq, const Vocabulary& vocab);

}  // namespace emoctx
