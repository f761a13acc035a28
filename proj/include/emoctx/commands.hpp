#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "emoctx/config.hpp"
#include "emoctx/data_io.hpp"
#include "emoctx/train.hpp"

namespace emoctx {

namespace fs = std::filesystem;

// Value of --embeddings / --sentence-vectors meaning "use nothing".
inline constexpr std::string_view kNone = "none";

// ---- preprocess ----

struct PreprocessOptions {
  fs::path train;
  fs::path val;
  std::optional<fs::path> test;
  fs::path out_dir;
  std::size_t max_tokens = 75;
};

struct SplitStats {
  Split split = Split::kTrain;
  std::size_t conversations = 0;
  LabelCounts counts{};
  double avg_utterance_tokens = 0.0;
  std::size_t kept = 0;  // after length filtering
};

// Writes vocab.txt, {train,val,test}.tsv and stats.tsv into out_dir; the
// statistics table is also written to `report`.
std::vector<SplitStats> cmd_preprocess(const PreprocessOptions& options, std::ostream& report);

// ---- finetune ----

struct FinetuneOptions {
  fs::path corpus;
  fs::path embeddings_in;
  fs::path embeddings_out;
  std::size_t epochs_frozen = 1;
  std::size_t epochs_unfrozen = 3;
  std::size_t dim = 100;
  std::size_t filters = 300;
  std::size_t batch_size = 64;
  double lr = 0.0005;
  std::uint64_t seed = 1;
};

void cmd_finetune(const FinetuneOptions& options, std::ostream& log);

// ---- train ----

struct TrainOptions {
  fs::path data_dir;  // output of preprocess
  TrainConfig config;
  std::string embeddings = std::string(kNone);
  std::string sentence_vectors = std::string(kNone);
  fs::path out_dir;
};

struct TrainArtifacts {
  fs::path checkpoint;
  fs::path history;
  TrainOutcome outcome;
  TrainConfig config;  // effective config (sentence_dim from the vector file)
};

TrainArtifacts cmd_train(const TrainOptions& options, std::ostream& log);

// ---- evaluate ----

struct EvaluateOptions {
  fs::path checkpoint;
  fs::path split;  // dataset TSV or an encoded split from preprocess
  std::string sentence_vectors = std::string(kNone);
  std::optional<bool> score_others;
};

struct EvaluateResult {
  ConfusionMatrix confusion;
  double micro_f1 = 0.0;
};

EvaluateResult cmd_evaluate(const EvaluateOptions& options, std::ostream& report);

// ---- sweep ----

inline const std::vector<std::string> kSweepAxes = {"hidden_size",  "num_layers",     "batch_size",
                                                    "lr",           "dropout_bilstm", "dropout_linear"};

struct SweepOptions {
  fs::path data_dir;
  TrainConfig base;
  std::string axis;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string embeddings = std::string(kNone);
  std::string sentence_vectors = std::string(kNone);
  fs::path out_dir;
};

struct SweepRun {
  std::string value;
  std::uint64_t seed = 0;
  std::string config_hash;
  double val_f1 = 0.0;
  double test_f1 = 0.0;  // NaN without a labeled test split
  double final_train_loss = 0.0;
  double uniform_baseline = 0.0;
  bool trained_effectively = false;
  bool reused = false;
};

struct SweepRow {
  std::string value;
  SeedAggregate val_f1;
  std::optional<SeedAggregate> test_f1;
  std::size_t not_trained = 0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepRow> rows;
};

// One training run per value x seed, each in runs/<config hash>/. Existing
// run results are reused, so an interrupted sweep resumes where it stopped.
SweepResult cmd_sweep(const SweepOptions& options, std::ostream& report);

}  // namespace emoctx
