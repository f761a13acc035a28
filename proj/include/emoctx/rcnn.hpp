#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoctx/config.hpp"
#include "emoctx/data_io.hpp"
#include "emoctx/labels.hpp"
#include "emoctx/nn.hpp"
#include "emoctx/random.hpp"
#include "emoctx/tensor.hpp"
#include "emoctx/text.hpp"

namespace emoctx {

// Embeddings -> stacked BiLSTM -> per-token [h_fwd; h_bwd; w] -> linear
// projection -> max over time -> [pooled; sentence vector] -> linear -> softmax.
struct RcnnParams {
  EmbeddingMatrix embedding;
  std::vector<LstmLayerParams> bilstm;
  Tensor proj_weight;  // [P x (2H + dim)]
  Tensor proj_bias;    // [P]
  Tensor out_weight;   // [classes x (P + sentence_dim)]
  Tensor out_bias;     // [classes]
  std::size_t sentence_dim = 0;

  std::size_t hidden_size() const { return bilstm.front().hidden_size; }
  std::size_t projection_size() const { return proj_weight.dim(0); }
  std::size_t token_feature_size() const { return proj_weight.dim(1); }
  std::size_t fused_size() const { return out_weight.dim(1); }

  // Embedding first, then BiLSTM layers, projection, output.
  std::vector<NamedTensor> named_parameters() const;
};

// Padded mini-batch. Rows of `token_ids` are PAD-filled past their valid
// length.
struct Batch {
  std::size_t size = 0;
  std::size_t n_max = 0;
  std::vector<std::size_t> token_ids;      // [size x n_max]
  std::vector<std::size_t> valid_lengths;  // [size]
  std::vector<double> sentence;            // [size x sentence_dim]
  std::vector<std::size_t> labels;         // [size] or empty
  std::vector<std::string> example_ids;

  std::span<const std::size_t> row(std::size_t i) const {
    return std::span<const std::size_t>(token_ids).subspan(i * n_max, n_max);
  }
};

// Throws std::invalid_argument naming any example ids that lack a sentence
// vector when sentence_dim > 0. `n_max` 0 pads to the longest example.
Batch make_batch(std::span<const TokenSequence* const> examples, const SentenceVectorStore* store,
                 std::size_t sentence_dim, std::size_t n_max = 0);

RcnnParams init_model(const TrainConfig& config, EmbeddingMatrix embedding, Rng& rng);

struct ForwardResult {
  Tensor logits;         // [b x classes]
  Tensor probabilities;  // [b x classes]
};

ForwardResult forward(const RcnnParams& params, const Batch& batch, const TrainConfig& config,
                      bool training, Rng& rng);

struct ShapeEntry {
  std::string name;
  Shape shape;
  std::size_t count = 0;
};

struct ShapeReport {
  std::vector<ShapeEntry> entries;
  std::size_t total = 0;
};

ShapeReport shape_report(const RcnnParams& params);

std::vector<NamedArray> to_arrays(const RcnnParams& params);
// Rebuilds parameters with the structure implied by `config`; throws when a
// stored array is missing or has the wrong shape.
RcnnParams from_arrays(const std::vector<NamedArray>& arrays, const TrainConfig& config);

}  // namespace emoctx
