#include "emoctx/labels.hpp"

#include <algorithm>
#include <cctype>

namespace emoctx {

std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::kHappy: return "happy";
    case Emotion::kSad: return "sad";
    case Emotion::kAngry: return "angry";
    case Emotion::kOthers: return "others";
  }
  return "?";
}

std::optional<Emotion> parse_emotion(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto e : kAllEmotions) {
    if (lower == to_string(e)) return e;
  }
  return std::nullopt;
}

}  // namespace emoctx
