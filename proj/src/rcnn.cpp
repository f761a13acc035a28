#include "emoctx/rcnn.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace emoctx {

std::vector<NamedTensor> RcnnParams::named_parameters() const {
  std::vector<NamedTensor> out{{"embedding", embedding.table}};
  for (std::size_t l = 0; l < bilstm.size(); ++l) {
    auto layer = emoctx::named_parameters(bilstm[l], "bilstm.l" + std::to_string(l));
    out.insert(out.end(), layer.begin(), layer.end());
  }
  out.push_back({"projection.weight", proj_weight});
  out.push_back({"projection.bias", proj_bias});
  out.push_back({"output.weight", out_weight});
  out.push_back({"output.bias", out_bias});
  return out;
}

Batch make_batch(std::span<const TokenSequence* const> examples, const SentenceVectorStore* store,
                 std::size_t sentence_dim, std::size_t n_max) {
  Batch batch;
  batch.size = examples.size();
  for (const auto* ex : examples) n_max = std::max(n_max, ex->ids.size());
  batch.n_max = n_max;
  batch.token_ids.assign(batch.size * n_max, kPadId);
  bool all_labeled = true;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = *examples[i];
    if (ex.ids.empty()) throw std::invalid_argument("make_batch: example '" + ex.id + "' is empty");
    std::copy(ex.ids.begin(), ex.ids.end(), batch.token_ids.begin() + i * n_max);
    batch.valid_lengths.push_back(ex.ids.size());
    batch.example_ids.push_back(ex.id);
    all_labeled = all_labeled && ex.label.has_value();
    if (ex.label) batch.labels.push_back(index_of(*ex.label));
    if (sentence_dim > 0) {
      const auto* vec = store ? store->find(ex.id) : nullptr;
      if (!vec) {
        missing.push_back(ex.id);
        continue;
      }
      if (vec->size() != sentence_dim) {
        throw std::invalid_argument("make_batch: sentence vector for '" + ex.id + "' has " +
                                    std::to_string(vec->size()) + " values, model expects " +
                                    std::to_string(sentence_dim));
      }
      batch.sentence.insert(batch.sentence.end(), vec->begin(), vec->end());
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw std::invalid_argument("missing sentence vectors for ids: " + list);
  }
  if (!all_labeled) batch.labels.clear();
  return batch;
}

RcnnParams init_model(const TrainConfig& config, EmbeddingMatrix embedding, Rng& rng) {
  validate(config);
  if (embedding.dim() != config.embedding_dim) {
    throw std::invalid_argument("init_model: embedding dim " + std::to_string(embedding.dim()) +
                                " != configured " + std::to_string(config.embedding_dim));
  }
  RcnnParams p;
  p.embedding = std::move(embedding);
  p.sentence_dim = config.sentence_dim;
  const std::size_t h = config.hidden_size;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    p.bilstm.push_back(make_lstm_layer(l == 0 ? config.embedding_dim : 2 * h, h, rng));
  }
  const std::size_t token_features = 2 * h + config.embedding_dim;
  p.proj_weight = init_uniform_fan_in(config.projection_size, token_features, token_features, rng);
  p.proj_bias = Tensor::zeros({config.projection_size}, true);
  const std::size_t fused = config.projection_size + config.sentence_dim;
  p.out_weight = init_uniform_fan_in(kNumClasses, fused, fused, rng);
  p.out_bias = Tensor::zeros({kNumClasses}, true);
  return p;
}

ForwardResult forward(const RcnnParams& params, const Batch& batch, const TrainConfig& config,
                      bool training, Rng& rng) {
  if (batch.size == 0) throw std::invalid_argument("forward: empty batch");
  if (params.sentence_dim > 0 && batch.sentence.size() != batch.size * params.sentence_dim) {
    throw std::invalid_argument("forward: batch carries " + std::to_string(batch.sentence.size()) +
                                " sentence values, expected " +
                                std::to_string(batch.size * params.sentence_dim));
  }
  std::vector<Tensor> rows;
  rows.reserve(batch.size);
  for (std::size_t i = 0; i < batch.size; ++i) {
    const std::size_t valid = batch.valid_lengths[i];
    Tensor words = embedding_lookup(params.embedding, batch.row(i));
    Tensor context = bilstm_encode(params.bilstm, words, valid, config.dropout_bilstm, training, rng);
    Tensor features = concat({context, words}, 1);
    features = dropout(features, config.dropout_linear, training, rng);
    Tensor projected = linear(params.proj_weight, params.proj_bias, features);
    if (config.pool_activation == PoolActivation::kTanh) projected = tanh(projected);
    Tensor pooled = max_over_time(projected, valid);

    Tensor fused;
    if (params.sentence_dim == 0) {
      fused = dropout(pooled, config.dropout_linear, training, rng);
    } else {
      const auto begin = batch.sentence.begin() + static_cast<std::ptrdiff_t>(i * params.sentence_dim);
      Tensor sentence({params.sentence_dim},
                      std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(params.sentence_dim)));
      if (config.dropout_sentence) {
        fused = dropout(concat({pooled, sentence}, 0), config.dropout_linear, training, rng);
      } else {
        fused = concat({dropout(pooled, config.dropout_linear, training, rng), sentence}, 0);
      }
    }
    rows.push_back(linear(params.out_weight, params.out_bias, fused));
  }
  ForwardResult result;
  result.logits = stack_rows(rows);
  result.probabilities = softmax_rows(result.logits);
  return result;
}

ShapeReport shape_report(const RcnnParams& params) {
  ShapeReport report;
  for (const auto& p : params.named_parameters()) {
    ShapeEntry e{p.name, p.tensor.shape(), p.tensor.size()};
    report.total += e.count;
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::vector<NamedArray> to_arrays(const RcnnParams& params) {
  std::vector<NamedArray> out;
  for (const auto& p : params.named_parameters()) {
    const auto v = p.tensor.values();
    out.push_back({p.name, p.tensor.shape(), std::vector<double>(v.begin(), v.end())});
  }
  return out;
}

RcnnParams from_arrays(const std::vector<NamedArray>& arrays, const TrainConfig& config) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  const auto* emb = by_name.count("embedding") ? by_name["embedding"] : nullptr;
  if (!emb || emb->shape.size() != 2) throw std::invalid_argument("checkpoint: no embedding table");
  if (emb->shape[1] != config.embedding_dim) {
    throw std::invalid_argument("checkpoint: embedding dim " + std::to_string(emb->shape[1]) +
                                " does not match config embedding_dim " +
                                std::to_string(config.embedding_dim));
  }
  // Build a skeleton with the right structure, then overwrite values.
  Rng rng(0);
  EmbeddingMatrix skeleton_emb{Tensor::zeros(emb->shape, true), false};
  RcnnParams params = init_model(config, skeleton_emb, rng);
  for (auto& p : params.named_parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::invalid_argument("checkpoint: missing parameter '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw std::invalid_argument("checkpoint: parameter '" + p.name + "' has shape " +
                                  shape_string(it->second->shape) + ", model expects " +
                                  shape_string(p.tensor.shape()));
    }
    std::copy(it->second->values.begin(), it->second->values.end(), p.tensor.mutable_values().begin());
  }
  if (by_name.size() != params.named_parameters().size()) {
    throw std::invalid_argument("checkpoint: unexpected extra parameters");
  }
  return params;
}

}  // namespace emoctx
