#include "emoctx/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace emoctx {

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& r : counts)
    for (auto c : r) t += c;
  return t;
}

std::size_t ConfusionMatrix::row_total(std::size_t gold) const {
  std::size_t t = 0;
  for (auto c : counts[gold]) t += c;
  return t;
}

std::size_t ConfusionMatrix::column_total(std::size_t pred) const {
  std::size_t t = 0;
  for (const auto& r : counts) t += r[pred];
  return t;
}

ConfusionMatrix confusion_matrix(const std::vector<Emotion>& gold, const std::vector<Emotion>& pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("confusion_matrix: " + std::to_string(gold.size()) + " gold labels vs " +
                                std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm.counts[index_of(gold[i])][index_of(pred[i])];
  return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

PrfCounts pooled_prf(const ConfusionMatrix& cm, const std::vector<Emotion>& scored) {
  PrfCounts out;
  for (auto e : scored) {
    const std::size_t c = index_of(e);
    const std::size_t tp = cm.counts[c][c];
    out.tp += tp;
    out.fp += cm.column_total(c) - tp;
    out.fn += cm.row_total(c) - tp;
  }
  out.precision = ratio(out.tp, out.tp + out.fp);
  out.recall = ratio(out.tp, out.tp + out.fn);
  out.f1 = harmonic(out.precision, out.recall);
  return out;
}

double micro_f1(const ConfusionMatrix& cm, const std::vector<Emotion>& scored) {
  return pooled_prf(cm, scored).f1;
}

std::vector<Emotion> scored_classes(bool score_others) {
  if (score_others) return {kAllEmotions.begin(), kAllEmotions.end()};
  return {kEmotionClasses.begin(), kEmotionClasses.end()};
}

SeedAggregate aggregate_seeds(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("aggregate_seeds: no scores");
  SeedAggregate agg;
  agg.scores = scores;
  double s = 0.0;
  for (double x : scores) s += x;
  agg.mean = s / static_cast<double>(scores.size());
  if (scores.size() > 1) {
    double ss = 0.0;
    for (double x : scores) ss += (x - agg.mean) * (x - agg.mean);
    agg.sd = std::sqrt(ss / static_cast<double>(scores.size() - 1));
  }
  return agg;
}

void write_metrics_report(std::ostream& out, const ConfusionMatrix& cm,
                          const std::vector<Emotion>& scored) {
  out << "class\tprecision\trecall\tf1\tsupport\n";
  for (auto e : kAllEmotions) {
    const auto prf = pooled_prf(cm, {e});
    out << to_string(e) << '\t' << prf.precision << '\t' << prf.recall << '\t' << prf.f1 << '\t'
        << cm.row_total(index_of(e)) << '\n';
  }
  const auto micro = pooled_prf(cm, scored);
  out << "micro\t" << micro.precision << '\t' << micro.recall << '\t' << micro.f1 << '\t'
      << cm.total() << '\n';
  out << "\ngold\\pred";
  for (auto e : kAllEmotions) out << '\t' << to_string(e);
  out << '\n';
  for (auto g : kAllEmotions) {
    out << to_string(g);
    for (auto p : kAllEmotions) out << '\t' << cm.counts[index_of(g)][index_of(p)];
    out << '\n';
  }
}

}  // namespace emoctx
