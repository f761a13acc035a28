#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <string>

namespace emoctx {

enum class PoolActivation { kNone, kTanh };
enum class Selection { kBest, kLast };

// Every training hyperparameter. Defaults reproduce the published setup.
struct TrainConfig {
  double lr = 0.0005;
  std::size_t batch_size = 64;
  std::size_t epochs = 6;
  double clip_norm = 5.0;
  double anneal_factor = 0.2;
  std::size_t anneal_after_epoch = 5;
  std::size_t freeze_embedding_epochs = 2;
  double dropout_bilstm = 0.5;
  double dropout_linear = 0.7;
  std::size_t hidden_size = 200;
  std::size_t num_layers = 2;
  std::uint64_t seed = 1;
  std::size_t sentence_dim = 2304;
  std::size_t embedding_dim = 100;
  std::size_t projection_size = 200;
  std::size_t max_tokens = 75;
  // Whether the fused output layer input (pooled + sentence vector) is
  // dropped out as a whole, or only the pooled half.
  bool dropout_sentence = true;
  PoolActivation pool_activation = PoolActivation::kNone;
  Selection select = Selection::kBest;
  bool score_others = false;

  bool operator==(const TrainConfig&) const = default;
};

// Throws std::invalid_argument naming the offending field.
void validate(const TrainConfig& config);

// Canonical "key = value" text, one key per line in a fixed order.
std::string to_text(const TrainConfig& config);

// Parses "key = value" lines. '#' starts a comment. Unset keys keep their
// defaults; unknown keys and bad values throw with the line number.
TrainConfig parse_config(std::istream& in, const std::string& source = "<config>");
TrainConfig parse_config_string(const std::string& text);

// Sets a single key from its textual value (same rules as the file parser).
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

// 64-bit FNV-1a of the canonical text.
std::uint64_t config_hash(const TrainConfig& config);

}  // namespace emoctx
