#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <vector>

#include "emoctx/labels.hpp"

namespace emoctx {

// Rows are gold labels, columns are predictions.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  std::size_t total() const;
  std::size_t row_total(std::size_t gold) const;
  std::size_t column_total(std::size_t pred) const;
};

ConfusionMatrix confusion_matrix(const std::vector<Emotion>& gold, const std::vector<Emotion>& pred);

// The three emotion classes; "others" is excluded from scoring.
inline constexpr std::array<Emotion, 3> kEmotionClasses = {Emotion::kHappy, Emotion::kSad,
                                                           Emotion::kAngry};

struct PrfCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

PrfCounts pooled_prf(const ConfusionMatrix& cm, const std::vector<Emotion>& scored_classes);

// Micro-averaged F1 pooled over `scored_classes`; 0/0 is taken as 0.
double micro_f1(const ConfusionMatrix& cm,
                const std::vector<Emotion>& scored_classes = {kEmotionClasses.begin(),
                                                              kEmotionClasses.end()});

std::vector<Emotion> scored_classes(bool score_others);

struct SeedAggregate {
  std::vector<double> scores;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single score
};

SeedAggregate aggregate_seeds(const std::vector<double>& scores);

// Per-class precision/recall/F1, the micro-F1 line and the confusion matrix
// as tab-separated text.
void write_metrics_report(std::ostream& out, const ConfusionMatrix& cm,
                          const std::vector<Emotion>& scored);

}  // namespace emoctx
