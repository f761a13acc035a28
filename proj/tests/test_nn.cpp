#include <gtest/gtest.h>

#include <cmath>

#include "emoctx/nn.hpp"

using namespace emoctx;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(shape_product(shape));
  for (auto& x : v) x = uniform(rng, -1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

void zero_out(const LstmDirection& d) {
  for (auto t : {d.w_input, d.w_hidden, d.bias}) {
    auto v = t.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

EmbeddingMatrix small_table(Rng& rng, std::size_t vocab, std::size_t dim) {
  Tensor t = random_tensor({vocab, dim}, rng);
  auto v = t.mutable_values();
  std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(dim), 0.0);
  return {t, false};
}

std::vector<Tensor> lstm_tensors(const std::vector<LstmLayerParams>& layers) {
  std::vector<Tensor> out;
  for (const auto& l : layers)
    for (const auto& p : named_parameters(l, "l")) out.push_back(p.tensor);
  return out;
}

}  // namespace

TEST(Init, FanInBoundsAndForgetBias) {
  Rng rng(1);
  const auto layer = make_lstm_layer(10, 4, rng);
  EXPECT_EQ(layer.forward.w_input.shape(), (Shape{16, 10}));
  EXPECT_EQ(layer.forward.w_hidden.shape(), (Shape{16, 4}));
  for (double w : layer.forward.w_input.values()) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(10.0));
  const auto b = vec(layer.backward.bias);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(b[i], (i >= 4 && i < 8) ? 1.0 : 0.0) << i;
}

TEST(EmbeddingLookup, PaddingRowIsZero) {
  Rng rng(2);
  auto table = small_table(rng, 5, 3);
  const std::vector<std::size_t> ids{0};
  EXPECT_EQ(vec(embedding_lookup(table, ids)), (std::vector<double>{0, 0, 0}));
}

TEST(EmbeddingLookup, RepeatedIdSumsGradient) {
  Rng rng(3);
  auto table = small_table(rng, 5, 2);
  const std::vector<std::size_t> ids{2, 2};
  Tensor rows = embedding_lookup(table, ids);
  EXPECT_EQ(rows.at(0, 0), rows.at(1, 0));
  EXPECT_EQ(rows.at(0, 1), rows.at(1, 1));
  backward(sum(mul(rows, Tensor({2, 2}, {1, 2, 3, 4}))));
  const auto g = table.table.grad_or_zero();
  EXPECT_DOUBLE_EQ(g[4], 4.0);
  EXPECT_DOUBLE_EQ(g[5], 6.0);
  EXPECT_DOUBLE_EQ(g[0], 0.0);
}

TEST(EmbeddingLookup, PaddingRowReceivesNoGradient) {
  Rng rng(4);
  auto table = small_table(rng, 4, 2);
  const std::vector<std::size_t> ids{0, 3, 0};
  backward(sum(embedding_lookup(table, ids)));
  const auto g = table.table.grad_or_zero();
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[6], 1.0);
}

TEST(EmbeddingLookup, FrozenTableGetsZeroGradient) {
  Rng rng(5);
  auto table = small_table(rng, 4, 2);
  table.frozen = true;
  Tensor w({2}, {0.5, -0.5}, true);
  const std::vector<std::size_t> ids{1, 2, 3};
  backward(sum(matmul(embedding_lookup(table, ids), w)));
  for (double g : table.table.grad_or_zero()) EXPECT_EQ(g, 0.0);
  EXPECT_TRUE(w.has_grad());
}

TEST(EmbeddingLookup, OutOfRangeIdThrows) {
  Rng rng(6);
  auto table = small_table(rng, 4, 2);
  const std::vector<std::size_t> ids{4};
  EXPECT_THROW(embedding_lookup(table, ids), std::out_of_range);
}

TEST(LstmStep, ZeroEverythingGivesZero) {
  Rng rng(7);
  auto layer = make_lstm_layer(3, 2, rng);
  zero_out(layer.forward);
  auto s = lstm_step(layer.forward, Tensor::zeros({3}), Tensor::zeros({2}), Tensor::zeros({2}));
  EXPECT_EQ(vec(s.h), (std::vector<double>{0, 0}));
  EXPECT_EQ(vec(s.c), (std::vector<double>{0, 0}));
}

TEST(LstmStep, SaturatedGatesAddCandidate) {
  Rng rng(8);
  auto layer = make_lstm_layer(1, 1, rng);
  zero_out(layer.forward);
  // Gates i, f, o pushed to 1 by a large bias; g = tanh(0.3).
  auto b = layer.forward.bias.mutable_values();
  b[0] = 40.0;
  b[1] = 40.0;
  b[2] = 0.3;
  b[3] = 40.0;
  const double c_prev = 0.25;
  auto s = lstm_step(layer.forward, Tensor({1}, {0.7}), Tensor({1}, {0.1}), Tensor({1}, {c_prev}));
  const double c = c_prev + std::tanh(0.3);
  EXPECT_NEAR(s.c.item(), c, 1e-12);
  EXPECT_NEAR(s.h.item(), std::tanh(c), 1e-12);
}

TEST(LstmStep, GradientCheck) {
  Rng rng(9);
  auto layer = make_lstm_layer(2, 3, rng);
  Tensor x = random_tensor({2}, rng), h = random_tensor({3}, rng), c = random_tensor({3}, rng);
  auto f = [&] {
    auto s = lstm_step(layer.forward, x, h, c);
    return add(sum(s.h), scale(sum(s.c), 0.3));
  };
  EXPECT_LT(finite_diff_check(f, {layer.forward.w_input, layer.forward.w_hidden, layer.forward.bias, x, h, c}), 1e-5);
}

TEST(Bilstm, SingleStepShape) {
  Rng rng(10);
  std::vector<LstmLayerParams> layers{make_lstm_layer(3, 2, rng), make_lstm_layer(4, 2, rng)};
  Tensor out = bilstm_encode(layers, random_tensor({1, 3}, rng, false), 1, 0.0, false, rng);
  EXPECT_EQ(out.shape(), (Shape{1, 4}));
}

TEST(Bilstm, ZeroParametersGiveZeroOutput) {
  Rng rng(11);
  std::vector<LstmLayerParams> layers{make_lstm_layer(3, 2, rng), make_lstm_layer(4, 2, rng)};
  for (auto& l : layers) {
    zero_out(l.forward);
    zero_out(l.backward);
  }
  Tensor out = bilstm_encode(layers, random_tensor({4, 3}, rng, false), 4, 0.0, false, rng);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Bilstm, PaperHiddenSizeShape) {
  Rng rng(12);
  std::vector<LstmLayerParams> layers{make_lstm_layer(100, 200, rng), make_lstm_layer(400, 200, rng)};
  Tensor out = bilstm_encode(layers, random_tensor({7, 100}, rng, false), 7, 0.5, true, rng);
  EXPECT_EQ(out.shape(), (Shape{7, 400}));
}

TEST(Bilstm, PaddedRowsAreZero) {
  Rng rng(13);
  std::vector<LstmLayerParams> layers{make_lstm_layer(3, 2, rng)};
  Tensor out = bilstm_encode(layers, random_tensor({5, 3}, rng, false), 3, 0.0, false, rng);
  for (std::size_t r = 3; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.at(r, c), 0.0);
}

TEST(Bilstm, ReversalSwapsDirections) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng() % 5, in = 3, h = 2;
    std::vector<LstmLayerParams> layers{make_lstm_layer(in, h, rng)};
    Tensor seq = random_tensor({n, in}, rng, false);
    std::vector<double> rev(n * in);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < in; ++j) rev[t * in + j] = seq.at(n - 1 - t, j);
    // Swap the two directions' weights so the reversed pass reuses them.
    std::vector<LstmLayerParams> swapped{layers[0]};
    std::swap(swapped[0].forward, swapped[0].backward);
    Tensor a = bilstm_encode(layers, seq, n, 0.0, false, rng);
    Tensor b = bilstm_encode(swapped, Tensor({n, in}, rev), n, 0.0, false, rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        EXPECT_NEAR(b.at(i, j), a.at(n - 1 - i, h + j), 1e-12);
        EXPECT_NEAR(b.at(i, h + j), a.at(n - 1 - i, j), 1e-12);
      }
  }
}

TEST(Bilstm, GradientCheckTwoLayers) {
  Rng rng(14);
  std::vector<LstmLayerParams> layers{make_lstm_layer(3, 2, rng), make_lstm_layer(4, 2, rng)};
  Tensor seq = random_tensor({4, 3}, rng);
  auto params = lstm_tensors(layers);
  params.push_back(seq);
  Rng unused(0);
  auto f = [&] { return sum(tanh(bilstm_encode(layers, seq, 3, 0.0, false, unused))); };
  EXPECT_LT(finite_diff_check(f, params), 1e-5);
}

TEST(Bilstm, ValidLengthErrors) {
  Rng rng(15);
  std::vector<LstmLayerParams> layers{make_lstm_layer(3, 2, rng)};
  EXPECT_THROW(bilstm_encode(layers, Tensor::zeros({2, 3}), 0, 0.0, false, rng), std::invalid_argument);
  EXPECT_THROW(bilstm_encode(layers, Tensor::zeros({2, 3}), 3, 0.0, false, rng), std::invalid_argument);
  EXPECT_THROW(bilstm_encode(layers, Tensor::zeros({2, 4}), 2, 0.0, false, rng), std::invalid_argument);
}

TEST(Conv, IdentityFilter) {
  Rng rng(16);
  auto bank = make_conv_bank({1}, 1, 1, rng);
  bank.weights[0].mutable_values()[0] = 1.0;
  bank.biases[0].mutable_values()[0] = 0.0;
  EXPECT_DOUBLE_EQ(conv1d_over_time(bank, Tensor({3, 1}, {1, 2, 3}), 3).item(), 3.0);
}

TEST(Conv, ShortSequenceIsZeroPadded) {
  Rng rng(17);
  auto bank = make_conv_bank({2}, 1, 1, rng);
  auto w = bank.weights[0].mutable_values();
  w[0] = 2.0;
  w[1] = 5.0;
  bank.biases[0].mutable_values()[0] = 0.5;
  // Only window: [x0, 0] -> 2*x0 + 5*0 + 0.5.
  EXPECT_DOUBLE_EQ(conv1d_over_time(bank, Tensor({1, 1}, {1.5}), 1).item(), 3.5);
}

TEST(Conv, PaperBankOutputSize) {
  Rng rng(18);
  auto bank = make_conv_bank({1, 2, 3}, 300, 100, rng);
  EXPECT_EQ(bank.output_size(), 900u);
  for (std::size_t n : {1, 2, 5}) {
    EXPECT_EQ(conv1d_over_time(bank, random_tensor({n, 100}, rng, false), n).shape(), (Shape{900}));
  }
}

TEST(Conv, InvariantToTrailingPadding) {
  Rng rng(19);
  auto bank = make_conv_bank({1, 2, 3}, 4, 3, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng() % 5;
    Tensor seq = random_tensor({n, 3}, rng, false);
    std::vector<double> padded(seq.values().begin(), seq.values().end());
    for (std::size_t extra = 0; extra < 4 * 3; ++extra) padded.push_back(uniform(rng, -9, 9));
    EXPECT_EQ(vec(conv1d_over_time(bank, seq, n)), vec(conv1d_over_time(bank, Tensor({n + 4, 3}, padded), n)));
  }
}

TEST(Conv, GradientCheck) {
  Rng rng(20);
  auto bank = make_conv_bank({1, 2, 3}, 2, 3, rng);
  Tensor seq = random_tensor({4, 3}, rng);
  std::vector<Tensor> params{seq};
  for (const auto& p : named_parameters(bank, "conv")) params.push_back(p.tensor);
  auto f = [&] { return sum(conv1d_over_time(bank, seq, 4)); };
  EXPECT_LT(finite_diff_check(f, params), 1e-5);
}

TEST(Dropout, DegenerateCasesAreIdentity) {
  Rng rng(21);
  Tensor x = random_tensor({10}, rng, false);
  EXPECT_EQ(vec(dropout(x, 0.0, true, rng)), vec(x));
  EXPECT_EQ(vec(dropout(x, 0.0, false, rng)), vec(x));
  EXPECT_EQ(vec(dropout(x, 0.7, false, rng)), vec(x));
}

TEST(Dropout, MeanWithinThreeSigma) {
  Rng rng(22);
  const std::size_t n = 100000;
  const double rate = 0.5;
  Tensor out = dropout(Tensor({n}, std::vector<double>(n, 1.0)), rate, true, rng);
  double total = 0.0;
  for (double v : out.values()) total += v;
  const double mean = total / static_cast<double>(n);
  // Each coordinate is 1/(1-p) with probability 1-p: variance p/(1-p).
  const double sigma = std::sqrt(rate / (1.0 - rate) / static_cast<double>(n));
  EXPECT_NEAR(mean, 1.0, 3.0 * sigma);
}

TEST(Dropout, ReproducibleMasks) {
  Tensor x({50}, std::vector<double>(50, 1.0));
  Rng a(99), b(99);
  EXPECT_EQ(vec(dropout(x, 0.3, true, a)), vec(dropout(x, 0.3, true, b)));
}

TEST(Dropout, RateOutOfRangeThrows) {
  Rng rng(23);
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, true, rng), std::invalid_argument);
  EXPECT_THROW(dropout(Tensor::zeros({2}), -0.1, true, rng), std::invalid_argument);
}

TEST(Linear, IdentityAndShape) {
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor x({3}, {4, -5, 6});
  EXPECT_EQ(vec(linear(eye, Tensor::zeros({3}), x)), vec(x));
  Rng rng(24);
  Tensor w = init_uniform_fan_in(200, 500, 500, rng);
  EXPECT_EQ(linear(w, Tensor::zeros({200}), Tensor::zeros({500})).shape(), (Shape{200}));
  EXPECT_EQ(linear(w, Tensor::zeros({200}), Tensor::zeros({7, 500})).shape(), (Shape{7, 200}));
}

TEST(Linear, GradientCheck) {
  Rng rng(25);
  Tensor w = random_tensor({3, 4}, rng), b = random_tensor({3}, rng), x = random_tensor({4}, rng);
  Tensor xs = random_tensor({2, 4}, rng);
  EXPECT_LT(finite_diff_check([&] { return sum(tanh(linear(w, b, x))); }, {w, b, x}), 1e-6);
  EXPECT_LT(finite_diff_check([&] { return sum(tanh(linear(w, b, xs))); }, {w, b, xs}), 1e-6);
}

TEST(BinaryCrossEntropy, ValuesAndGradient) {
  EXPECT_NEAR(binary_cross_entropy_with_logits(Tensor({1}, {0.0}), 1).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(binary_cross_entropy_with_logits(Tensor({1}, {800.0}), 1).item(), 0.0, 1e-15);
  EXPECT_NEAR(binary_cross_entropy_with_logits(Tensor({1}, {-800.0}), 1).item(), 800.0, 1e-9);
  Tensor z({1}, {0.4}, true);
  EXPECT_LT(finite_diff_check([&] { return binary_cross_entropy_with_logits(z, 0); }, {z}), 1e-8);
  EXPECT_LT(finite_diff_check([&] { return binary_cross_entropy_with_logits(z, 1); }, {z}), 1e-8);
}

TEST(NamedParameters, Names) {
  Rng rng(26);
  const auto names = named_parameters(make_lstm_layer(2, 2, rng), "bilstm.l0");
  ASSERT_EQ(names.size(), 6u);
  EXPECT_EQ(names[0].name, "bilstm.l0.fwd.w_input");
  EXPECT_EQ(names[5].name, "bilstm.l0.bwd.bias");
}
