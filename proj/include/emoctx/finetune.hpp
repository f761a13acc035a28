#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "emoctx/nn.hpp"
#include "emoctx/random.hpp"
#include "emoctx/text.hpp"

namespace emoctx {

// Embedding fine-tuning on a binary sentiment task: the table is held fixed
// for `frozen_epochs`, then trained for `unfrozen_epochs`.
struct FinetuneSchedule {
  std::size_t frozen_epochs = 1;
  std::size_t unfrozen_epochs = 3;
  double lr = 0.0005;
  std::size_t batch_size = 64;
  double dropout = 0.5;

  std::size_t total_epochs() const { return frozen_epochs + unfrozen_epochs; }
};

struct FinetuneModel {
  EmbeddingMatrix embedding;
  ConvFilterBank bank;
  Tensor out_weight;  // [1 x bank.output_size()]
  Tensor out_bias;    // [1]

  std::vector<NamedTensor> named_parameters() const;
};

struct BinaryExample {
  std::vector<std::size_t> ids;
  int label = 0;
};

// Kernel sizes {1, 2, 3} with `filters_per_size` filters each.
FinetuneModel build_finetune_model(EmbeddingMatrix embedding, Rng& rng,
                                   std::size_t filters_per_size = 300);

// Pre-sigmoid score for one example.
Tensor finetune_logit(const FinetuneModel& model, const BinaryExample& example, double dropout_rate,
                      bool training, Rng& rng);

double finetune_accuracy(const FinetuneModel& model, const std::vector<BinaryExample>& examples);

struct FinetuneResult {
  EmbeddingMatrix embedding;
  std::vector<double> epoch_losses;  // mean training loss per epoch
  double initial_loss = 0.0;         // eval-mode loss before any update
};

using FinetuneObserver = std::function<void(std::size_t epoch, const FinetuneModel& model)>;

// Trains with binary cross-entropy and Adam; returns the final table.
FinetuneResult finetune_embeddings(FinetuneModel& model, const std::vector<BinaryExample>& corpus,
                                   const FinetuneSchedule& schedule, Rng& rng,
                                   const FinetuneObserver& observer = {});

struct TextLabel {
  std::string text;
  int label = 0;
};

// "text<TAB>label" per line (label 0 or 1); an optional "text\tlabel" header.
std::vector<TextLabel> load_binary_corpus(const std::filesystem::path& path);

// Cleans and tokenizes; empty texts become a single padding id.
BinaryExample encode_binary(const TextLabel& item, const Vocabulary& vocab);

}  // namespace emoctx
