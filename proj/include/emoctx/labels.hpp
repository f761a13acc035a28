#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace emoctx {

enum class Emotion : std::size_t { kHappy = 0, kSad = 1, kAngry = 2, kOthers = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<Emotion, kNumClasses> kAllEmotions = {
    Emotion::kHappy, Emotion::kSad, Emotion::kAngry, Emotion::kOthers};

inline std::size_t index_of(Emotion e) { return static_cast<std::size_t>(e); }
inline Emotion emotion_at(std::size_t i) { return static_cast<Emotion>(i); }

std::string_view to_string(Emotion e);

// Case-insensitive; nullopt for anything other than the four class names.
std::optional<Emotion> parse_emotion(std::string_view text);

}  // namespace emoctx
