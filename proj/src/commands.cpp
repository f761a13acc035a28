#include "emoctx/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "emoctx/finetune.hpp"
#include "emoctx/metrics.hpp"
#include "emoctx/rcnn.hpp"

namespace emoctx {

namespace {

std::ofstream open_report(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::vector<TokenSequence> assemble_all(const DatasetSplit& ds) {
  std::vector<TokenSequence> out;
  out.reserve(ds.conversations.size());
  for (const auto& c : ds.conversations) out.push_back(assemble_input(c));
  return out;
}

double avg_utterance_tokens(const DatasetSplit& ds) {
  std::size_t tokens = 0, utterances = 0;
  for (const auto& c : ds.conversations) {
    for (const auto& turn : c.turns) {
      tokens += tokenize(clean_text(turn)).size();
      ++utterances;
    }
  }
  return utterances == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(utterances);
}

std::vector<TokenSequence> encode_all(std::vector<TokenSequence> seqs, const Vocabulary& vocab) {
  for (auto& s : seqs) s = encode_ids(std::move(s), vocab);
  return seqs;
}

struct PreparedData {
  Vocabulary vocab;
  std::vector<TokenSequence> train, val;
  std::optional<std::vector<TokenSequence>> test;
};

PreparedData load_prepared(const fs::path& dir) {
  for (const char* name : {"vocab.txt", "train.tsv", "val.tsv"}) {
    if (!fs::exists(dir / name)) {
      throw FormatError("missing " + (dir / name).string() + " (run preprocess first)");
    }
  }
  PreparedData d;
  d.vocab = load_vocabulary(dir / "vocab.txt");
  d.train = load_encoded_split(dir / "train.tsv");
  d.val = load_encoded_split(dir / "val.tsv");
  if (fs::exists(dir / "test.tsv")) d.test = load_encoded_split(dir / "test.tsv");
  for (const auto* set : {&d.train, &d.val}) {
    for (const auto& s : *set) {
      for (auto id : s.ids) {
        if (id >= d.vocab.size()) throw FormatError("encoded id out of vocabulary range in " + dir.string());
      }
    }
  }
  return d;
}

bool all_labeled(const std::vector<TokenSequence>& seqs) {
  if (seqs.empty()) return false;
  for (const auto& s : seqs)
    if (!s.label) return false;
  return true;
}

std::optional<SentenceVectorStore> load_optional_store(const std::string& spec, std::size_t expected_dim) {
  if (spec == kNone || spec.empty()) return std::nullopt;
  return load_sentence_vectors(spec, expected_dim);
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Shared by cmd_train and cmd_sweep: everything from a prepared data
// directory to a trained, selected model.
struct RunState {
  TrainConfig config;
  PreparedData data;
  std::optional<SentenceVectorStore> store;
  RcnnParams model;  // holds the selected parameters after the run
  TrainOutcome outcome;
};

RunState run_training(const fs::path& data_dir, TrainConfig config, const std::string& embeddings,
                      const std::string& sentence_vectors, std::ostream& log) {
  RunState run;
  run.data = load_prepared(data_dir);
  run.store = load_optional_store(sentence_vectors, 0);
  config.sentence_dim = run.store ? run.store->dim : 0;
  validate(config);
  run.config = config;

  Rng rng(config.seed);
  WordVectors pretrained;
  pretrained.dim = config.embedding_dim;
  if (embeddings != kNone && !embeddings.empty()) {
    pretrained = load_word_vectors(embeddings, config.embedding_dim);
  }
  auto init = build_embedding_matrix(run.data.vocab, pretrained, config.embedding_dim, rng);
  log << "vocabulary " << run.data.vocab.size() << ", pretrained coverage " << init.coverage << "\n";
  run.model = init_model(config, std::move(init.embedding), rng);
  run.outcome = train(run.model, run.data.train, run.data.val, run.store ? &*run.store : nullptr, config, rng);
  run.model = from_arrays(run.outcome.selected_params, config);
  log << "selected epoch " << run.outcome.selected_epoch << ", val micro-F1 " << run.outcome.selected_val_f1
      << "\n";
  return run;
}

void write_checkpoint(const RunState& run, const fs::path& path) {
  Checkpoint ckpt;
  ckpt.vocab = run.data.vocab;
  ckpt.params = run.outcome.selected_params;
  ckpt.config = run.config;
  ckpt.epoch = static_cast<std::uint32_t>(run.outcome.selected_epoch);
  ckpt.best_val_f1 = run.outcome.selected_val_f1;
  save_checkpoint(ckpt, path);
}

void write_history_file(const RunState& run, const fs::path& path) {
  auto out = open_report(path);
  write_history(out, run.outcome.history);
}

}  // namespace

// ---- preprocess ---------------------------------------------------------------

std::vector<SplitStats> cmd_preprocess(const PreprocessOptions& options, std::ostream& report) {
  struct Input {
    Split split;
    fs::path path;
  };
  std::vector<Input> inputs{{Split::kTrain, options.train}, {Split::kVal, options.val}};
  if (options.test) inputs.push_back({Split::kTest, *options.test});
  for (const auto& in : inputs) {
    if (!fs::exists(in.path)) throw FormatError("input file not found: " + in.path.string());
  }
  fs::create_directories(options.out_dir);

  std::vector<SplitStats> stats;
  Vocabulary vocab;
  for (const auto& in : inputs) {
    const DatasetSplit ds = load_dataset(in.path, in.split);
    auto seqs = filter_long(assemble_all(ds), options.max_tokens, in.split);
    if (in.split == Split::kTrain) vocab = build_vocab(seqs);
    seqs = encode_all(std::move(seqs), vocab);
    save_encoded_split(options.out_dir / (std::string(to_string(in.split)) + ".tsv"), seqs);
    stats.push_back({in.split, ds.conversations.size(), ds.label_counts, avg_utterance_tokens(ds), seqs.size()});
  }
  save_vocabulary(options.out_dir / "vocab.txt", vocab);

  std::ostringstream table;
  table << "split\tsize\thappy\tsad\tangry\tothers\tavg_utterance_tokens\tkept\n";
  for (const auto& s : stats) {
    table << to_string(s.split) << '\t' << s.conversations;
    for (auto c : s.counts) table << '\t' << c;
    table << '\t' << std::fixed << std::setprecision(2) << s.avg_utterance_tokens << std::defaultfloat
          << '\t' << s.kept << '\n';
  }
  auto out = open_report(options.out_dir / "stats.tsv");
  out << table.str();
  report << table.str();
  return stats;
}

// ---- finetune -------------------------------------------------------------------

void cmd_finetune(const FinetuneOptions& options, std::ostream& log) {
  const WordVectors pretrained = load_word_vectors(options.embeddings_in, options.dim);
  const auto corpus_text = load_binary_corpus(options.corpus);
  if (corpus_text.empty()) throw std::invalid_argument("finetune: empty corpus " + options.corpus.string());

  Vocabulary vocab;
  for (const auto& tok : pretrained.order) vocab.add(tok);
  for (const auto& item : corpus_text)
    for (const auto& tok : tokenize(clean_text(item.text))) vocab.add(tok);

  Rng rng(options.seed);
  auto init = build_embedding_matrix(vocab, pretrained, options.dim, rng);
  FinetuneModel model = build_finetune_model(std::move(init.embedding), rng, options.filters);
  std::vector<BinaryExample> corpus;
  corpus.reserve(corpus_text.size());
  for (const auto& item : corpus_text) corpus.push_back(encode_binary(item, vocab));

  FinetuneSchedule schedule;
  schedule.frozen_epochs = options.epochs_frozen;
  schedule.unfrozen_epochs = options.epochs_unfrozen;
  schedule.lr = options.lr;
  schedule.batch_size = options.batch_size;
  const auto result = finetune_embeddings(model, corpus, schedule, rng);
  log << "epoch\tloss\tembedding\n";
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    log << e + 1 << '\t' << result.epoch_losses[e] << '\t'
        << (e < schedule.frozen_epochs ? "frozen" : "trained") << '\n';
  }
  save_word_vectors(options.embeddings_out, vocab, result.embedding);
}

// ---- train ----------------------------------------------------------------------

TrainArtifacts cmd_train(const TrainOptions& options, std::ostream& log) {
  fs::create_directories(options.out_dir);
  RunState run = run_training(options.data_dir, options.config, options.embeddings,
                              options.sentence_vectors, log);
  TrainArtifacts art;
  art.checkpoint = options.out_dir / "checkpoint.bin";
  art.history = options.out_dir / "history.tsv";
  write_checkpoint(run, art.checkpoint);
  write_history_file(run, art.history);
  art.outcome = std::move(run.outcome);
  art.config = run.config;
  return art;
}

// ---- evaluate -------------------------------------------------------------------

EvaluateResult cmd_evaluate(const EvaluateOptions& options, std::ostream& report) {
  const Checkpoint ckpt = load_checkpoint(options.checkpoint);
  TrainConfig config = ckpt.config;
  if (options.score_others) config.score_others = *options.score_others;
  const RcnnParams params = from_arrays(ckpt.params, config);

  std::optional<SentenceVectorStore> store;
  if (config.sentence_dim > 0) {
    if (options.sentence_vectors == kNone || options.sentence_vectors.empty()) {
      throw std::invalid_argument("evaluate: checkpoint expects " + std::to_string(config.sentence_dim) +
                                  "-dim sentence vectors; pass --sentence-vectors");
    }
    store = load_sentence_vectors(options.sentence_vectors, 0);
    if (store->dim != config.sentence_dim) {
      throw std::invalid_argument("evaluate: sentence vectors have dim " + std::to_string(store->dim) +
                                  " but the checkpoint expects " + std::to_string(config.sentence_dim));
    }
  } else if (options.sentence_vectors != kNone && !options.sentence_vectors.empty()) {
    throw std::invalid_argument("evaluate: checkpoint was trained without sentence vectors");
  }

  std::string header;
  {
    std::ifstream probe(options.split);
    if (!probe) throw FormatError("cannot open " + options.split.string());
    std::getline(probe, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
  }
  std::vector<TokenSequence> seqs;
  if (header == "id\tlabel\ttokens\tids") {
    seqs = load_encoded_split(options.split);
  } else {
    seqs = assemble_all(load_dataset(options.split, Split::kTest));
  }
  seqs = encode_all(std::move(seqs), ckpt.vocab);
  if (!all_labeled(seqs)) {
    throw std::invalid_argument("evaluate: split " + options.split.string() + " is not labeled");
  }

  EvaluateResult result;
  result.confusion = evaluate(params, seqs, store ? &*store : nullptr, config);
  const auto scored = scored_classes(config.score_others);
  result.micro_f1 = micro_f1(result.confusion, scored);
  write_metrics_report(report, result.confusion, scored);
  return result;
}

// ---- sweep ----------------------------------------------------------------------

SweepResult cmd_sweep(const SweepOptions& options, std::ostream& report) {
  if (std::find(kSweepAxes.begin(), kSweepAxes.end(), options.axis) == kSweepAxes.end()) {
    std::string valid;
    for (const auto& a : kSweepAxes) valid += (valid.empty() ? "" : ", ") + a;
    throw std::invalid_argument("sweep: invalid axis '" + options.axis + "' (valid: " + valid + ")");
  }
  if (options.values.empty()) throw std::invalid_argument("sweep: no values");
  if (options.seeds.empty()) throw std::invalid_argument("sweep: no seeds");

  // Validate every value before any run starts.
  std::vector<TrainConfig> per_value;
  for (const auto& v : options.values) {
    TrainConfig c = options.base;
    set_config_value(c, options.axis, v);
    validate(c);
    per_value.push_back(c);
  }

  const fs::path runs_dir = options.out_dir / "runs";
  fs::create_directories(runs_dir);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  SweepResult result;
  for (std::size_t vi = 0; vi < options.values.size(); ++vi) {
    for (auto seed : options.seeds) {
      TrainConfig c = per_value[vi];
      c.seed = seed;
      SweepRun rec;
      rec.value = options.values[vi];
      rec.seed = seed;
      // Hash includes the inputs so that different data gives different runs.
      std::ostringstream key;
      key << to_text(c) << fs::absolute(options.data_dir).string() << '\n'
          << options.embeddings << '\n'
          << options.sentence_vectors << '\n';
      std::uint64_t h = config_hash(c);
      for (unsigned char ch : key.str()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
      }
      rec.config_hash = hex(h);
      const fs::path dir = runs_dir / rec.config_hash;
      const fs::path result_file = dir / "result.tsv";

      if (fs::exists(result_file)) {
        std::ifstream in(result_file);
        std::string header, line;
        std::getline(in, header);
        std::getline(in, line);
        std::istringstream fields(line);
        std::string eff;
        fields >> rec.val_f1 >> rec.test_f1 >> rec.final_train_loss >> rec.uniform_baseline >> eff;
        if (!fields && !fields.eof()) throw FormatError("corrupt run record " + result_file.string());
        rec.trained_effectively = eff == "yes";
        rec.reused = true;
      } else {
        fs::create_directories(dir);
        std::ostringstream log;
        RunState run = run_training(options.data_dir, c, options.embeddings, options.sentence_vectors, log);
        const SentenceVectorStore* store = run.store ? &*run.store : nullptr;
        rec.val_f1 = run.outcome.selected_val_f1;
        rec.test_f1 = nan;
        if (run.data.test && all_labeled(*run.data.test)) {
          rec.test_f1 = micro_f1(evaluate(run.model, *run.data.test, store, run.config),
                                 scored_classes(run.config.score_others));
        }
        rec.final_train_loss = dataset_loss(run.model, run.data.train, store, run.config, run.outcome.weights);
        rec.uniform_baseline = uniform_baseline_loss(run.data.train, run.outcome.weights);
        rec.trained_effectively = rec.final_train_loss < rec.uniform_baseline;
        write_checkpoint(run, dir / "checkpoint.bin");
        write_history_file(run, dir / "history.tsv");
        {
          auto cfg = open_report(dir / "config.txt");
          cfg << to_text(run.config);
        }
        // Written last: its presence marks the run as complete.
        auto out = open_report(dir / "result.tsv.partial");
        out << "val_f1\ttest_f1\tfinal_train_loss\tuniform_baseline\ttrained_effectively\n"
            << rec.val_f1 << '\t' << rec.test_f1 << '\t' << rec.final_train_loss << '\t' << rec.uniform_baseline
            << '\t' << (rec.trained_effectively ? "yes" : "no") << '\n';
        out.close();
        fs::rename(dir / "result.tsv.partial", result_file);
      }
      result.runs.push_back(rec);
    }

    SweepRow row;
    row.value = options.values[vi];
    std::vector<double> val, test;
    for (const auto& r : result.runs) {
      if (r.value != row.value) continue;
      val.push_back(r.val_f1);
      if (!std::isnan(r.test_f1)) test.push_back(r.test_f1);
      if (!r.trained_effectively) ++row.not_trained;
    }
    row.val_f1 = aggregate_seeds(val);
    if (test.size() == val.size()) row.test_f1 = aggregate_seeds(test);
    result.rows.push_back(row);
  }

  auto runs_out = open_report(options.out_dir / "runs.tsv");
  runs_out << "axis\tvalue\tseed\trun\tval_f1\ttest_f1\tfinal_train_loss\tuniform_baseline\tstatus\n";
  for (const auto& r : result.runs) {
    runs_out << options.axis << '\t' << r.value << '\t' << r.seed << '\t' << r.config_hash << '\t' << r.val_f1
             << '\t' << r.test_f1 << '\t' << r.final_train_loss << '\t' << r.uniform_baseline << '\t'
             << (r.trained_effectively ? "trained" : "not trained effectively") << '\n';
  }

  std::ostringstream table;
  table << std::setprecision(6);
  table << "axis\tvalue\truns\tmean_val_f1\tsd_val_f1\tmean_test_f1\tsd_test_f1\tnot_trained_effectively\n";
  for (const auto& row : result.rows) {
    table << options.axis << '\t' << row.value << '\t' << row.val_f1.scores.size() << '\t' << row.val_f1.mean
          << '\t' << row.val_f1.sd << '\t';
    if (row.test_f1) {
      table << row.test_f1->mean << '\t' << row.test_f1->sd;
    } else {
      table << "nan\tnan";
    }
    table << '\t' << row.not_trained << '\n';
  }
  auto sweep_out = open_report(options.out_dir / "sweep.tsv");
  sweep_out << table.str();
  report << table.str();
  return result;
}

}  // namespace emoctx
