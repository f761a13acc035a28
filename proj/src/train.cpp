#include "emoctx/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace emoctx {

namespace {

constexpr double kLogFloor = 1e-12;

std::vector<const TokenSequence*> pointers(const std::vector<TokenSequence>& seqs) {
  std::vector<const TokenSequence*> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(&s);
  return out;
}

void require_labels(const std::vector<TokenSequence>& seqs, const char* what) {
  for (const auto& s : seqs) {
    if (!s.label) throw std::invalid_argument(std::string(what) + ": example '" + s.id + "' has no label");
  }
}

void require_sentence_vectors(const std::vector<TokenSequence>& a, const std::vector<TokenSequence>& b,
                              const SentenceVectorStore* store, std::size_t dim) {
  if (dim == 0) return;
  std::vector<std::string> missing;
  for (const auto* set : {&a, &b})
    for (const auto& s : *set)
      if (!store || !store->find(s.id)) missing.push_back(s.id);
  if (missing.empty()) return;
  std::string list;
  for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
  throw std::invalid_argument("missing sentence vectors for ids: " + list);
}

double global_norm(const std::vector<NamedTensor>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

}  // namespace

ClassWeights compute_class_weights(const LabelCounts& train_counts, const LabelCounts& val_counts) {
  const double train_total = std::accumulate(train_counts.begin(), train_counts.end(), 0.0);
  const double val_total = std::accumulate(val_counts.begin(), val_counts.end(), 0.0);
  std::array<double, kNumClasses> raw{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (train_counts[c] == 0 || val_counts[c] == 0) {
      throw std::invalid_argument("compute_class_weights: class '" +
                                  std::string(to_string(emotion_at(c))) +
                                  "' has a zero count, ratio undefined");
    }
    raw[c] = (static_cast<double>(val_counts[c]) / val_total) /
             (static_cast<double>(train_counts[c]) / train_total);
  }
  const double z = std::accumulate(raw.begin(), raw.end(), 0.0);
  ClassWeights w;
  for (std::size_t c = 0; c < kNumClasses; ++c) w.weights[c] = raw[c] / z;
  return w;
}

Tensor weighted_cross_entropy(const Tensor& probabilities, std::span<const std::size_t> labels,
                              const ClassWeights& weights) {
  if (probabilities.rank() != 2 || probabilities.dim(1) != kNumClasses ||
      probabilities.dim(0) != labels.size()) {
    throw std::invalid_argument("weighted_cross_entropy: probabilities " +
                                shape_string(probabilities.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = labels.size();
  const auto p = probabilities.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= kNumClasses) {
      throw std::invalid_argument("weighted_cross_entropy: invalid label index " +
                                  std::to_string(labels[i]));
    }
    loss += weights[labels[i]] * -std::log(std::max(p[i * kNumClasses + labels[i]], kLogFloor));
  }
  loss /= static_cast<double>(b);
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  return detail::make_op({1}, {loss}, {probabilities}, [ys = std::move(ys), weights](detail::Node& self) {
    auto& parent = self.parents[0];
    if (!parent->requires_grad) return;
    parent->ensure_grad();
    const double scale = self.grad[0] / static_cast<double>(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const std::size_t k = i * kNumClasses + ys[i];
      const double pk = parent->values[k];
      if (pk > kLogFloor) parent->grad[k] -= scale * weights[ys[i]] / pk;
    }
  });
}

double clip_gradients(const std::vector<NamedTensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw std::runtime_error("clip_gradients: non-finite gradient in '" + p.name + "'");
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (auto p : params) {
    if (!p.tensor.has_grad()) continue;
    for (auto& g : p.tensor.mutable_grad()) g *= factor;
  }
  return factor;
}

void adam_step(AdamState& state, const std::vector<NamedTensor>& params, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  ++state.t;
  for (auto p : params) {
    auto& mom = state.moments[p.name];
    auto values = p.tensor.mutable_values();
    if (mom.m.size() != values.size()) {
      mom.m.assign(values.size(), 0.0);
      mom.v.assign(values.size(), 0.0);
      mom.steps = 0;
    }
    const auto grad = p.tensor.grad();
    if (grad.empty()) continue;
    ++mom.steps;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(mom.steps));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(mom.steps));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g;
      mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
  if (epoch == 0) throw std::invalid_argument("lr_at_epoch: epochs are 1-based");
  const std::size_t extra = epoch > config.anneal_after_epoch ? epoch - config.anneal_after_epoch : 0;
  return config.lr * std::pow(config.anneal_factor, static_cast<double>(extra));
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history) {
  const auto old_precision = out.precision(17);
  out << "epoch\tlr\ttrain_loss\tval_micro_f1\tclip_fraction\n";
  for (const auto& r : history) {
    out << r.epoch << '\t' << r.lr << '\t' << r.train_loss << '\t' << r.val_micro_f1 << '\t'
        << r.clip_fraction << '\n';
  }
  out.precision(old_precision);
}

TrainOutcome train(RcnnParams& params, const std::vector<TokenSequence>& train_set,
                   const std::vector<TokenSequence>& val_set, const SentenceVectorStore* store,
                   const TrainConfig& config, Rng& rng, const EpochObserver& observer) {
  validate(config);
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation split");
  require_labels(train_set, "train");
  require_labels(val_set, "train");
  require_sentence_vectors(train_set, val_set, store, params.sentence_dim);

  TrainOutcome outcome;
  outcome.weights = compute_class_weights(count_labels(train_set), count_labels(val_set));
  const auto scored = scored_classes(config.score_others);

  AdamState adam;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    params.embedding.frozen = epoch <= config.freeze_embedding_epochs;
    auto trainable = params.named_parameters();
    if (params.embedding.frozen) trainable.erase(trainable.begin());

    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    std::size_t steps = 0, clipped = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const TokenSequence*> members;
      for (std::size_t i = start; i < end; ++i) members.push_back(&train_set[order[i]]);
      const Batch batch = make_batch(members, store, params.sentence_dim);

      for (auto p : params.named_parameters()) p.tensor.zero_grad();
      auto out = forward(params, batch, config, true, rng);
      Tensor loss = weighted_cross_entropy(out.probabilities, batch.labels, outcome.weights);
      backward(loss);

      StepRecord step{epoch, global_norm(trainable), 0.0};
      const double factor = clip_gradients(trainable, config.clip_norm);
      step.post_clip_norm = global_norm(trainable);
      outcome.steps.push_back(step);
      if (factor < 1.0) ++clipped;
      adam_step(adam, trainable, lr);

      loss_sum += loss.item() * static_cast<double>(batch.size);
      ++steps;
    }

    if (observer) observer(epoch, params);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.clip_fraction = static_cast<double>(clipped) / static_cast<double>(steps);
    rec.val_micro_f1 = micro_f1(evaluate(params, val_set, store, config), scored);
    outcome.history.push_back(rec);

    const bool take = config.select == Selection::kLast ? epoch == config.epochs : rec.val_micro_f1 > best;
    if (take) {
      best = std::max(best, rec.val_micro_f1);
      outcome.selected_params = to_arrays(params);
      outcome.selected_epoch = epoch;
      outcome.selected_val_f1 = rec.val_micro_f1;
    }
  }
  params.embedding.frozen = false;
  return outcome;
}

std::vector<std::array<double, kNumClasses>> predict_probabilities(
    const RcnnParams& params, const std::vector<TokenSequence>& examples,
    const SentenceVectorStore* store, const TrainConfig& config) {
  NoGradGuard no_grad;
  Rng unused(0);
  const auto ptrs = pointers(examples);
  std::vector<std::array<double, kNumClasses>> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < ptrs.size(); start += config.batch_size) {
    const std::size_t end = std::min(ptrs.size(), start + config.batch_size);
    const Batch batch = make_batch(std::span(ptrs).subspan(start, end - start), store, params.sentence_dim);
    const Tensor probabilities = forward(params, batch, config, false, unused).probabilities;
    const auto probs = probabilities.values();
    for (std::size_t i = 0; i < batch.size; ++i) {
      std::array<double, kNumClasses> row{};
      std::copy_n(probs.begin() + i * kNumClasses, kNumClasses, row.begin());
      out.push_back(row);
    }
  }
  return out;
}

std::vector<Emotion> predict_labels(const RcnnParams& params, const std::vector<TokenSequence>& examples,
                                    const SentenceVectorStore* store, const TrainConfig& config) {
  std::vector<Emotion> out;
  for (const auto& row : predict_probabilities(params, examples, store, config)) {
    out.push_back(emotion_at(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())));
  }
  return out;
}

ConfusionMatrix evaluate(const RcnnParams& params, const std::vector<TokenSequence>& examples,
                         const SentenceVectorStore* store, const TrainConfig& config) {
  require_labels(examples, "evaluate");
  std::vector<Emotion> gold;
  for (const auto& s : examples) gold.push_back(*s.label);
  return confusion_matrix(gold, predict_labels(params, examples, store, config));
}

double dataset_loss(const RcnnParams& params, const std::vector<TokenSequence>& examples,
                    const SentenceVectorStore* store, const TrainConfig& config,
                    const ClassWeights& weights) {
  require_labels(examples, "dataset_loss");
  const auto probs = predict_probabilities(params, examples, store, config);
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::size_t y = index_of(*examples[i].label);
    total += weights[y] * -std::log(std::max(probs[i][y], kLogFloor));
  }
  return total / static_cast<double>(examples.size());
}

double uniform_baseline_loss(const std::vector<TokenSequence>& examples, const ClassWeights& weights) {
  require_labels(examples, "uniform_baseline_loss");
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : examples) total += weights[index_of(*s.label)] * std::log(static_cast<double>(kNumClasses));
  return total / static_cast<double>(examples.size());
}

}  // namespace emoctx
