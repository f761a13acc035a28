#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emoctx/random.hpp"
#include "emoctx/tensor.hpp"

namespace emoctx {

// Word embedding table. Row 0 is the padding row: it stays zero and never
// receives gradient.
struct EmbeddingMatrix {
  Tensor table;  // [vocab_size x dim]
  bool frozen = false;

  std::size_t vocab_size() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }
};

// One scan direction of an LSTM layer. Gates are stacked in the order
// input, forget, cell candidate, output along the 4*hidden axis.
struct LstmDirection {
  Tensor w_input;   // [4H x input]
  Tensor w_hidden;  // [4H x H]
  Tensor bias;      // [4H]
};

struct LstmLayerParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  LstmDirection forward;
  LstmDirection backward;
};

struct ConvFilterBank {
  std::vector<std::size_t> kernel_sizes;
  std::size_t filters_per_size = 0;
  std::size_t dim = 0;
  std::vector<Tensor> weights;  // per kernel size k: [filters x k*dim]
  std::vector<Tensor> biases;   // per kernel size: [filters]

  std::size_t output_size() const { return kernel_sizes.size() * filters_per_size; }
};

// ---- construction ----------------------------------------------------------

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor init_uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

LstmLayerParams make_lstm_layer(std::size_t input_size, std::size_t hidden_size, Rng& rng);
ConvFilterBank make_conv_bank(std::vector<std::size_t> kernel_sizes, std::size_t filters_per_size,
                              std::size_t dim, Rng& rng);

// ---- layers ----------------------------------------------------------------

Tensor embedding_lookup(const EmbeddingMatrix& table, std::span<const std::size_t> ids);

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_step(const LstmDirection& params, const Tensor& x_t, const Tensor& h_prev,
                    const Tensor& c_prev);

// Stacked bidirectional encoder over the first `valid_length` rows of
// `seq` [n x input]. Returns [n x 2H] with rows [h_forward ; h_backward];
// rows past `valid_length` are zero. When training, dropout at
// `dropout_rate` is applied to each layer's output (between layers and on
// the final output).
Tensor bilstm_encode(const std::vector<LstmLayerParams>& layers, const Tensor& seq,
                     std::size_t valid_length, double dropout_rate, bool training, Rng& rng);

// Convolution over time with rectifier and global max-pool per kernel size.
// Sequences shorter than a kernel are zero-padded at the end to its width.
Tensor conv1d_over_time(const ConvFilterBank& bank, const Tensor& seq, std::size_t valid_length);

// Inverted dropout. Identity when not training or when rate is 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// W*x + b for x of shape [in], or row-wise for x of shape [n x in].
Tensor linear(const Tensor& weight, const Tensor& bias, const Tensor& x);

// Numerically stable binary cross-entropy on a single logit, label in {0,1}.
Tensor binary_cross_entropy_with_logits(const Tensor& logit, double label);

std::vector<NamedTensor> named_parameters(const LstmLayerParams& layer, const std::string& prefix);
std::vector<NamedTensor> named_parameters(const ConvFilterBank& bank, const std::string& prefix);

}  // namespace emoctx
