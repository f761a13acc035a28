#include "emoctx/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "emoctx/data_io.hpp"
#include "emoctx/train.hpp"

namespace emoctx {

std::vector<NamedTensor> FinetuneModel::named_parameters() const {
  std::vector<NamedTensor> out{{"embedding", embedding.table}};
  auto conv = emoctx::named_parameters(bank, "conv");
  out.insert(out.end(), conv.begin(), conv.end());
  out.push_back({"output.weight", out_weight});
  out.push_back({"output.bias", out_bias});
  return out;
}

FinetuneModel build_finetune_model(EmbeddingMatrix embedding, Rng& rng, std::size_t filters_per_size) {
  FinetuneModel model;
  const std::size_t dim = embedding.dim();
  model.embedding = std::move(embedding);
  model.bank = make_conv_bank({1, 2, 3}, filters_per_size, dim, rng);
  const std::size_t pooled = model.bank.output_size();
  model.out_weight = init_uniform_fan_in(1, pooled, pooled, rng);
  model.out_bias = Tensor::zeros({1}, true);
  return model;
}

Tensor finetune_logit(const FinetuneModel& model, const BinaryExample& example, double dropout_rate,
                      bool training, Rng& rng) {
  Tensor words = embedding_lookup(model.embedding, example.ids);
  Tensor pooled = conv1d_over_time(model.bank, words, example.ids.size());
  pooled = dropout(pooled, dropout_rate, training, rng);
  return linear(model.out_weight, model.out_bias, pooled);
}

namespace {

double eval_loss(const FinetuneModel& model, const std::vector<BinaryExample>& corpus) {
  NoGradGuard no_grad;
  Rng unused(0);
  double total = 0.0;
  for (const auto& ex : corpus) {
    total += binary_cross_entropy_with_logits(finetune_logit(model, ex, 0.0, false, unused), ex.label).item();
  }
  return total / static_cast<double>(corpus.size());
}

}  // namespace

double finetune_accuracy(const FinetuneModel& model, const std::vector<BinaryExample>& examples) {
  if (examples.empty()) return 0.0;
  NoGradGuard no_grad;
  Rng unused(0);
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const double z = finetune_logit(model, ex, 0.0, false, unused).item();
    correct += (z > 0.0 ? 1 : 0) == ex.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

FinetuneResult finetune_embeddings(FinetuneModel& model, const std::vector<BinaryExample>& corpus,
                                   const FinetuneSchedule& schedule, Rng& rng,
                                   const FinetuneObserver& observer) {
  if (corpus.empty()) throw std::invalid_argument("finetune_embeddings: empty corpus");
  if (schedule.batch_size == 0) throw std::invalid_argument("finetune_embeddings: batch size 0");
  for (const auto& ex : corpus) {
    if (ex.label != 0 && ex.label != 1) {
      throw std::invalid_argument("finetune_embeddings: labels must be 0 or 1");
    }
  }
  FinetuneResult result;
  result.initial_loss = eval_loss(model, corpus);

  AdamState adam;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= schedule.total_epochs(); ++epoch) {
    model.embedding.frozen = epoch <= schedule.frozen_epochs;
    auto trainable = model.named_parameters();
    if (model.embedding.frozen) trainable.erase(trainable.begin());

    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      for (auto p : model.named_parameters()) p.tensor.zero_grad();
      std::vector<Tensor> losses;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = corpus[order[i]];
        losses.push_back(binary_cross_entropy_with_logits(
            finetune_logit(model, ex, schedule.dropout, true, rng), ex.label));
      }
      Tensor loss = mean(concat(losses, 0));
      backward(loss);
      adam_step(adam, trainable, schedule.lr);
      loss_sum += loss.item() * static_cast<double>(end - start);
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(corpus.size()));
    if (observer) observer(epoch, model);
  }
  model.embedding.frozen = false;
  result.embedding = model.embedding;
  return result;
}

std::vector<TextLabel> load_binary_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<TextLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == "text\tlabel")) continue;
    const auto tab = line.rfind('\t');
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    if (tab == std::string::npos) throw FormatError(where + ": expected 'text<TAB>label'");
    const std::string label = line.substr(tab + 1);
    if (label != "0" && label != "1") throw FormatError(where + ": label must be 0 or 1, got '" + label + "'");
    out.push_back({line.substr(0, tab), label == "1" ? 1 : 0});
  }
  return out;
}

BinaryExample encode_binary(const TextLabel& item, const Vocabulary& vocab) {
  BinaryExample ex;
  ex.label = item.label;
  for (const auto& tok : tokenize(clean_text(item.text))) ex.ids.push_back(vocab.id(tok));
  if (ex.ids.empty()) ex.ids.push_back(kPadId);
  return ex;
}

}  // namespace emoctx
