#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "emoctx/config.hpp"
#include "emoctx/data_io.hpp"
#include "emoctx/metrics.hpp"
#include "emoctx/rcnn.hpp"

namespace emoctx {

struct ClassWeights {
  std::array<double, kNumClasses> weights{};

  double operator[](std::size_t c) const { return weights[c]; }
};

// w_c proportional to (val_c / val_total) / (train_c / train_total), then
// normalized to sum to 1. Every count must be positive.
ClassWeights compute_class_weights(const LabelCounts& train_counts, const LabelCounts& val_counts);

// Mean over the batch of w[y] * -log(max(p[y], 1e-12)).
Tensor weighted_cross_entropy(const Tensor& probabilities, std::span<const std::size_t> labels,
                              const ClassWeights& weights);

// Rescales all gradients so their global L2 norm is at most `max_norm`.
// Returns the applied factor (1 when no clipping happened).
double clip_gradients(const std::vector<NamedTensor>& params, double max_norm);

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t steps = 0;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;  // optimizer steps taken
  // Keyed by parameter name. Each parameter counts its own updates so that
  // one that joins late (an unfrozen embedding) starts with fresh bias
  // correction.
  std::map<std::string, AdamMoments> moments;
};

// One bias-corrected Adam update of every tensor in `params` from its
// current gradient.
void adam_step(AdamState& state, const std::vector<NamedTensor>& params, double lr);

// lr * anneal_factor ^ max(0, epoch - anneal_after_epoch), epoch 1-based.
double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_micro_f1 = 0.0;
  double clip_fraction = 0.0;
};

struct StepRecord {
  std::size_t epoch = 0;
  double pre_clip_norm = 0.0;
  double post_clip_norm = 0.0;
};

void write_history(std::ostream& out, const std::vector<EpochRecord>& history);

struct TrainOutcome {
  std::vector<NamedArray> selected_params;
  std::size_t selected_epoch = 0;
  double selected_val_f1 = 0.0;
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
  ClassWeights weights;
};

// Called after each epoch's updates, before validation.
using EpochObserver = std::function<void(std::size_t epoch, const RcnnParams& params)>;

// Trains `params` in place. Validation micro-F1 after each epoch picks the
// returned snapshot (best epoch, ties to the earlier one, or the last epoch
// when config.select says so).
TrainOutcome train(RcnnParams& params, const std::vector<TokenSequence>& train_set,
                   const std::vector<TokenSequence>& val_set, const SentenceVectorStore* store,
                   const TrainConfig& config, Rng& rng, const EpochObserver& observer = {});

// ---- inference helpers ----

std::vector<std::array<double, kNumClasses>> predict_probabilities(
    const RcnnParams& params, const std::vector<TokenSequence>& examples,
    const SentenceVectorStore* store, const TrainConfig& config);

std::vector<Emotion> predict_labels(const RcnnParams& params, const std::vector<TokenSequence>& examples,
                                    const SentenceVectorStore* store, const TrainConfig& config);

// Requires every example to be labeled.
ConfusionMatrix evaluate(const RcnnParams& params, const std::vector<TokenSequence>& examples,
                         const SentenceVectorStore* store, const TrainConfig& config);

// Eval-mode weighted loss over all examples.
double dataset_loss(const RcnnParams& params, const std::vector<TokenSequence>& examples,
                    const SentenceVectorStore* store, const TrainConfig& config,
                    const ClassWeights& weights);

// Loss of a model that predicts the uniform distribution: mean of w[y]*ln 4.
double uniform_baseline_loss(const std::vector<TokenSequence>& examples, const ClassWeights& weights);

}  // namespace emoctx
