#include "emoctx/text.hpp"

#include <cctype>
#include <stdexcept>

namespace emoctx {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii(char c) { return static_cast<unsigned char>(c) < 0x80; }

bool is_ascii_punct(char c) {
  return is_ascii(c) && std::ispunct(static_cast<unsigned char>(c)) != 0;
}

bool is_ascii_alnum(char c) {
  return is_ascii(c) && std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Length of the UTF-8 sequence starting with `lead`; malformed leads count
// as a single byte.
std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

char32_t decode(std::string_view s, std::size_t pos, std::size_t len) {
  const auto b = [&](std::size_t i) { return static_cast<unsigned char>(s[pos + i]); };
  switch (len) {
    case 2: return ((b(0) & 0x1Fu) << 6) | (b(1) & 0x3Fu);
    case 3: return ((b(0) & 0x0Fu) << 12) | ((b(1) & 0x3Fu) << 6) | (b(2) & 0x3Fu);
    case 4:
      return ((b(0) & 0x07u) << 18) | ((b(1) & 0x3Fu) << 12) | ((b(2) & 0x3Fu) << 6) |
             (b(3) & 0x3Fu);
    default: return b(0);
  }
}

enum class CharClass { kWord, kApostrophe, kPunct, kSymbol, kModifier };

CharClass classify(char32_t cp) {
  if (cp < 0x80) {
    if (cp == '\'') return CharClass::kApostrophe;
    if (std::ispunct(static_cast<int>(cp))) return CharClass::kPunct;
    return CharClass::kWord;
  }
  if (cp == 0x200D || cp == 0xFE0F || (cp >= 0x1F3FB && cp <= 0x1F3FF)) return CharClass::kModifier;
  if (cp >= 0x1F000 || (cp >= 0x2600 && cp <= 0x27BF) || (cp >= 0x2300 && cp <= 0x23FF) ||
      (cp >= 0x2B00 && cp <= 0x2BFF)) {
    return CharClass::kSymbol;
  }
  return CharClass::kWord;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void push_word(std::vector<std::string>& out, std::string word) {
  if (word.empty()) return;
  if (word.find('\'') != std::string::npos) {
    if (ends_with(word, "n't") && word.size() > 3) {
      out.push_back(word.substr(0, word.size() - 3));
      out.emplace_back("n't");
      return;
    }
    for (std::string_view suffix : {"'m", "'s", "'re", "'ve", "'ll", "'d"}) {
      if (ends_with(word, suffix) && word.size() > suffix.size()) {
        out.push_back(word.substr(0, word.size() - suffix.size()));
        out.emplace_back(suffix);
        return;
      }
    }
  }
  out.push_back(std::move(word));
}

void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  std::string word;
  bool last_was_symbol = false;
  std::size_t pos = 0;
  while (pos < chunk.size()) {
    std::size_t len = utf8_length(static_cast<unsigned char>(chunk[pos]));
    if (pos + len > chunk.size()) len = 1;
    const std::string_view piece = chunk.substr(pos, len);
    const CharClass cls = classify(decode(chunk, pos, len));
    switch (cls) {
      case CharClass::kWord:
        word.append(piece);
        last_was_symbol = false;
        break;
      case CharClass::kApostrophe: {
        const bool inside = !word.empty() && pos + 1 < chunk.size() && is_ascii_alnum(chunk[pos + 1]);
        if (inside) {
          word.push_back('\'');
        } else {
          push_word(out, std::move(word));
          word.clear();
          out.emplace_back("'");
        }
        last_was_symbol = false;
        break;
      }
      case CharClass::kPunct:
        push_word(out, std::move(word));
        word.clear();
        out.emplace_back(piece);
        last_was_symbol = false;
        break;
      case CharClass::kSymbol:
        push_word(out, std::move(word));
        word.clear();
        out.emplace_back(piece);
        last_was_symbol = true;
        break;
      case CharClass::kModifier:
        if (word.empty() && last_was_symbol) {
          out.back().append(piece);
        } else {
          word.append(piece);
        }
        break;
    }
    pos += len;
  }
  push_word(out, std::move(word));
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val" || text == "dev") return Split::kVal;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
  add(kEosToken);
}

std::size_t Vocabulary::add(std::string_view token) {
  auto [it, inserted] = token_to_id_.try_emplace(std::string(token), id_to_token_.size());
  if (inserted) id_to_token_.emplace_back(token);
  return it->second;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= id_to_token_.size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range for size " +
                            std::to_string(id_to_token_.size()));
  }
  return id_to_token_[id];
}

std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    } else if (is_ascii_punct(c) && !out.empty() && out.back() == c) {
      continue;
    }
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::string lowered(text);
  for (auto& c : lowered) {
    if (is_ascii(c)) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  std::vector<std::string> out;
  std::size_t pos = 0;
  const std::string_view view = lowered;
  while (pos < view.size()) {
    while (pos < view.size() && is_space(view[pos])) ++pos;
    std::size_t end = pos;
    while (end < view.size() && !is_space(view[end])) ++end;
    if (end > pos) tokenize_chunk(view.substr(pos, end - pos), out);
    pos = end;
  }
  return out;
}

TokenSequence assemble_input(const Conversation& conv) {
  TokenSequence seq;
  seq.id = conv.id;
  seq.label = conv.label;
  for (std::size_t t = 0; t < conv.turns.size(); ++t) {
    if (t > 0) seq.tokens.emplace_back(kEosToken);
    auto toks = tokenize(clean_text(conv.turns[t]));
    seq.tokens.insert(seq.tokens.end(), std::make_move_iterator(toks.begin()),
                      std::make_move_iterator(toks.end()));
  }
  return seq;
}

std::vector<TokenSequence> filter_long(std::vector<TokenSequence> seqs, std::size_t max_tokens,
                                       Split split) {
  if (split != Split::kTrain) return seqs;
  std::vector<TokenSequence> kept;
  kept.reserve(seqs.size());
  for (auto& s : seqs) {
    if (s.n() <= max_tokens) kept.push_back(std::move(s));
  }
  return kept;
}

Vocabulary build_vocab(std::span<const TokenSequence> train_sequences) {
  Vocabulary vocab;
  for (const auto& seq : train_sequences)
    for (const auto& tok : seq.tokens) vocab.add(tok);
  return vocab;
}

TokenSequence encode_ids(TokenSequence seq, const Vocabulary& vocab) {
  seq.ids.clear();
  seq.ids.reserve(seq.tokens.size());
  for (const auto& tok : seq.tokens) seq.ids.push_back(vocab.id(tok));
  return seq;
}

}  // namespace emoctx
