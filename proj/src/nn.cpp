#include "emoctx/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emoctx {

Tensor init_uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = uniform(rng, -bound, bound);
  return Tensor({rows, cols}, std::move(v), true);
}

namespace {

LstmDirection make_direction(std::size_t input_size, std::size_t hidden, Rng& rng) {
  LstmDirection d;
  d.w_input = init_uniform_fan_in(4 * hidden, input_size, input_size, rng);
  d.w_hidden = init_uniform_fan_in(4 * hidden, hidden, hidden, rng);
  std::vector<double> b(4 * hidden, 0.0);
  std::fill(b.begin() + hidden, b.begin() + 2 * hidden, 1.0);  // forget gate
  d.bias = Tensor({4 * hidden}, std::move(b), true);
  return d;
}

// Gate activations given the pre-activation vector [4H].
LstmState gates_to_state(const Tensor& pre, const Tensor& c_prev, std::size_t hidden) {
  Tensor i = sigmoid(slice(pre, 0, 0, hidden));
  Tensor f = sigmoid(slice(pre, 0, hidden, 2 * hidden));
  Tensor g = tanh(slice(pre, 0, 2 * hidden, 3 * hidden));
  Tensor o = sigmoid(slice(pre, 0, 3 * hidden, 4 * hidden));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

// Runs one direction over the valid prefix. `projected` holds W*x_t + b for
// every row, so each step only adds the recurrent term.
std::vector<Tensor> scan(const LstmDirection& p, const Tensor& projected, std::size_t valid_length,
                         std::size_t hidden, bool reverse) {
  std::vector<Tensor> out(valid_length);
  Tensor h = Tensor::zeros({hidden});
  Tensor c = Tensor::zeros({hidden});
  for (std::size_t s = 0; s < valid_length; ++s) {
    const std::size_t t = reverse ? valid_length - 1 - s : s;
    Tensor pre = add(row(projected, t), matmul(p.w_hidden, h));
    auto next = gates_to_state(pre, c, hidden);
    h = next.h;
    c = next.c;
    out[t] = h;
  }
  return out;
}

}  // namespace

LstmLayerParams make_lstm_layer(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  LstmLayerParams layer;
  layer.input_size = input_size;
  layer.hidden_size = hidden_size;
  layer.forward = make_direction(input_size, hidden_size, rng);
  layer.backward = make_direction(input_size, hidden_size, rng);
  return layer;
}

ConvFilterBank make_conv_bank(std::vector<std::size_t> kernel_sizes, std::size_t filters_per_size,
                              std::size_t dim, Rng& rng) {
  ConvFilterBank bank;
  bank.kernel_sizes = std::move(kernel_sizes);
  bank.filters_per_size = filters_per_size;
  bank.dim = dim;
  for (auto k : bank.kernel_sizes) {
    bank.weights.push_back(init_uniform_fan_in(filters_per_size, k * dim, k * dim, rng));
    bank.biases.push_back(Tensor::zeros({filters_per_size}, true));
  }
  return bank;
}

Tensor embedding_lookup(const EmbeddingMatrix& table, std::span<const std::size_t> ids) {
  const std::size_t vocab = table.vocab_size();
  const std::size_t dim = table.dim();
  if (ids.empty()) throw std::invalid_argument("embedding_lookup: empty id sequence");
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * dim);
  const auto values = table.table.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= vocab) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(idx[r]) +
                              " out of range for vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(values.begin() + idx[r] * dim, dim, out.begin() + r * dim);
  }
  const std::size_t n = idx.size();
  if (table.frozen) return Tensor({n, dim}, std::move(out));
  return detail::make_op({n, dim}, std::move(out), {table.table},
                         [idx = std::move(idx), dim](detail::Node& self) {
                           auto& p = self.parents[0];
                           if (!p->requires_grad) return;
                           p->ensure_grad();
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             if (idx[r] == 0) continue;
                             for (std::size_t j = 0; j < dim; ++j)
                               p->grad[idx[r] * dim + j] += self.grad[r * dim + j];
                           }
                         });
}

LstmState lstm_step(const LstmDirection& params, const Tensor& x_t, const Tensor& h_prev,
                    const Tensor& c_prev) {
  const std::size_t hidden = params.w_hidden.dim(1);
  if (x_t.rank() != 1 || x_t.size() != params.w_input.dim(1) || h_prev.size() != hidden ||
      c_prev.size() != hidden) {
    throw std::invalid_argument("lstm_step: input " + shape_string(x_t.shape()) + ", h " +
                                shape_string(h_prev.shape()) + ", c " +
                                shape_string(c_prev.shape()) + " do not fit W_input " +
                                shape_string(params.w_input.shape()));
  }
  Tensor pre = add(add(matmul(params.w_input, x_t), matmul(params.w_hidden, h_prev)), params.bias);
  return gates_to_state(pre, c_prev, hidden);
}

Tensor bilstm_encode(const std::vector<LstmLayerParams>& layers, const Tensor& seq,
                     std::size_t valid_length, double dropout_rate, bool training, Rng& rng) {
  if (layers.empty()) throw std::invalid_argument("bilstm_encode: no layers");
  if (seq.rank() != 2 || valid_length == 0) {
    throw std::invalid_argument("bilstm_encode: empty sequence");
  }
  const std::size_t n = seq.dim(0);
  if (valid_length > n) {
    throw std::invalid_argument("bilstm_encode: valid_length " + std::to_string(valid_length) +
                                " exceeds sequence length " + std::to_string(n));
  }
  Tensor input = valid_length == n ? seq : slice(seq, 0, 0, valid_length);
  for (const auto& layer : layers) {
    if (input.dim(1) != layer.input_size) {
      throw std::invalid_argument("bilstm_encode: layer expects input " +
                                  std::to_string(layer.input_size) + ", got " +
                                  std::to_string(input.dim(1)));
    }
    const std::size_t h = layer.hidden_size;
    Tensor proj_f = add_row_bias(matmul(input, transpose(layer.forward.w_input)), layer.forward.bias);
    Tensor proj_b =
        add_row_bias(matmul(input, transpose(layer.backward.w_input)), layer.backward.bias);
    auto hf = scan(layer.forward, proj_f, valid_length, h, false);
    auto hb = scan(layer.backward, proj_b, valid_length, h, true);
    Tensor out = concat({stack_rows(hf), stack_rows(hb)}, 1);
    input = dropout(out, dropout_rate, training, rng);
  }
  if (valid_length == n) return input;
  return concat({input, Tensor::zeros({n - valid_length, input.dim(1)})}, 0);
}

Tensor conv1d_over_time(const ConvFilterBank& bank, const Tensor& seq, std::size_t valid_length) {
  if (seq.rank() != 2 || seq.dim(1) != bank.dim) {
    throw std::invalid_argument("conv1d_over_time: sequence " + shape_string(seq.shape()) +
                                " does not match bank dim " + std::to_string(bank.dim));
  }
  if (valid_length == 0 || valid_length > seq.dim(0)) {
    throw std::invalid_argument("conv1d_over_time: valid_length " + std::to_string(valid_length) +
                                " outside [1, " + std::to_string(seq.dim(0)) + "]");
  }
  const std::size_t dim = bank.dim;
  std::vector<Tensor> pooled;
  for (std::size_t b = 0; b < bank.kernel_sizes.size(); ++b) {
    const std::size_t k = bank.kernel_sizes[b];
    const std::size_t padded = std::max(valid_length, k);
    const std::size_t windows = padded - k + 1;
    // Unfold rows into [windows x k*dim]; positions >= valid_length read zeros.
    std::vector<double> unfolded(windows * k * dim, 0.0);
    const auto sv = seq.values();
    for (std::size_t w = 0; w < windows; ++w)
      for (std::size_t o = 0; o < k; ++o) {
        const std::size_t t = w + o;
        if (t >= valid_length) continue;
        std::copy_n(sv.begin() + t * dim, dim, unfolded.begin() + (w * k + o) * dim);
      }
    Tensor windows_t = detail::make_op(
        {windows, k * dim}, std::move(unfolded), {seq},
        [windows, k, dim, valid_length](detail::Node& self) {
          auto& p = self.parents[0];
          if (!p->requires_grad) return;
          p->ensure_grad();
          for (std::size_t w = 0; w < windows; ++w)
            for (std::size_t o = 0; o < k; ++o) {
              const std::size_t t = w + o;
              if (t >= valid_length) continue;
              for (std::size_t j = 0; j < dim; ++j)
                p->grad[t * dim + j] += self.grad[(w * k + o) * dim + j];
            }
        });
    Tensor act = relu(add_row_bias(matmul(windows_t, transpose(bank.weights[b])), bank.biases[b]));
    pooled.push_back(max_over_time(act, windows));
  }
  return concat(pooled, 0);
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor linear(const Tensor& weight, const Tensor& bias, const Tensor& x) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.size() != weight.dim(0)) {
    throw std::invalid_argument("linear: weight " + shape_string(weight.shape()) + " and bias " +
                                shape_string(bias.shape()) + " disagree");
  }
  if (x.rank() == 1) {
    if (x.size() != weight.dim(1)) {
      throw std::invalid_argument("linear: input " + shape_string(x.shape()) +
                                  " does not fit weight " + shape_string(weight.shape()));
    }
    return add(matmul(weight, x), bias);
  }
  if (x.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw std::invalid_argument("linear: input " + shape_string(x.shape()) +
                                " does not fit weight " + shape_string(weight.shape()));
  }
  return add_row_bias(matmul(x, transpose(weight)), bias);
}

Tensor binary_cross_entropy_with_logits(const Tensor& logit, double label) {
  if (logit.size() != 1) throw std::invalid_argument("binary_cross_entropy: expected one logit");
  if (label != 0.0 && label != 1.0) {
    throw std::invalid_argument("binary_cross_entropy: label must be 0 or 1");
  }
  const double z = logit.item();
  const double loss = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
  return detail::make_op({1}, {loss}, {logit}, [label](detail::Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double s = 1.0 / (1.0 + std::exp(-p->values[0]));
    p->grad[0] += self.grad[0] * (s - label);
  });
}

std::vector<NamedTensor> named_parameters(const LstmLayerParams& layer, const std::string& prefix) {
  return {
      {prefix + ".fwd.w_input", layer.forward.w_input},
      {prefix + ".fwd.w_hidden", layer.forward.w_hidden},
      {prefix + ".fwd.bias", layer.forward.bias},
      {prefix + ".bwd.w_input", layer.backward.w_input},
      {prefix + ".bwd.w_hidden", layer.backward.w_hidden},
      {prefix + ".bwd.bias", layer.backward.bias},
  };
}

std::vector<NamedTensor> named_parameters(const ConvFilterBank& bank, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t b = 0; b < bank.kernel_sizes.size(); ++b) {
    const std::string k = std::to_string(bank.kernel_sizes[b]);
    out.push_back({prefix + ".k" + k + ".weight", bank.weights[b]});
    out.push_back({prefix + ".k" + k + ".bias", bank.biases[b]});
  }
  return out;
}

}  // namespace emoctx
