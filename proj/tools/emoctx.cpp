#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emoctx/commands.hpp"

using namespace emoctx;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
  std::vector<std::string> overrides;  // key=value
};

TrainConfig resolve_config(const Globals& g) {
  TrainConfig config = g.config.empty() ? TrainConfig{} : load_config(g.config);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) config.seed = *g.seed;
  validate(config);
  return config;
}

fs::path require_out(const Globals& g, const char* command) {
  if (g.out.empty()) throw std::invalid_argument(std::string(command) + ": --out is required");
  return g.out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion classification for three-turn conversations"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "random seed (overrides the config)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--config", g.config, "config file (key = value lines)");
  app.add_option("--set", g.overrides, "config override key=value (repeatable)");

  PreprocessOptions pre;
  std::string pre_test;
  auto* preprocess = app.add_subcommand("preprocess", "tokenize splits, build the vocabulary, report statistics");
  preprocess->add_option("--train", pre.train, "training TSV")->required();
  preprocess->add_option("--val", pre.val, "validation TSV")->required();
  preprocess->add_option("--test", pre_test, "test TSV");
  preprocess->add_option("--max-tokens", pre.max_tokens, "drop longer training conversations");

  FinetuneOptions ft;
  auto* finetune = app.add_subcommand("finetune", "fine-tune word vectors on a binary corpus");
  finetune->add_option("--corpus", ft.corpus, "text<TAB>label file")->required();
  finetune->add_option("--embeddings-in", ft.embeddings_in, "pretrained word vectors")->required();
  finetune->add_option("--embeddings-out", ft.embeddings_out, "output word vectors")->required();
  finetune->add_option("--epochs-frozen", ft.epochs_frozen);
  finetune->add_option("--epochs-unfrozen", ft.epochs_unfrozen);
  finetune->add_option("--dim", ft.dim, "embedding dimension");
  finetune->add_option("--filters", ft.filters, "filters per kernel size");
  finetune->add_option("--batch-size", ft.batch_size);
  finetune->add_option("--lr", ft.lr);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train the classifier");
  train_cmd->add_option("--data", tr.data_dir, "preprocess output directory")->required();
  train_cmd->add_option("--embeddings", tr.embeddings, "word vectors or 'none'");
  train_cmd->add_option("--sentence-vectors", tr.sentence_vectors, "id<TAB>vector file or 'none'");

  EvaluateOptions ev;
  bool ev_others = false;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on a labeled split");
  evaluate_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  evaluate_cmd->add_option("--split", ev.split, "dataset TSV or encoded split")->required();
  evaluate_cmd->add_option("--sentence-vectors", ev.sentence_vectors);
  auto* others_flag = evaluate_cmd->add_flag("--score-others", ev_others, "include 'others' in micro-F1");

  SweepOptions sw;
  std::string sw_values, sw_seeds;
  auto* sweep = app.add_subcommand("sweep", "one-axis sensitivity sweep over several seeds");
  sweep->add_option("--data", sw.data_dir, "preprocess output directory")->required();
  sweep->add_option("--axis", sw.axis)->required();
  sweep->add_option("--values", sw_values, "comma-separated values")->required();
  sweep->add_option("--seeds", sw_seeds, "comma-separated seeds (default 1,2,3,4,5)");
  sweep->add_option("--embeddings", sw.embeddings);
  sweep->add_option("--sentence-vectors", sw.sentence_vectors);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*preprocess) {
      pre.out_dir = require_out(g, "preprocess");
      if (!pre_test.empty()) pre.test = pre_test;
      cmd_preprocess(pre, std::cout);
    } else if (*finetune) {
      if (g.seed) ft.seed = *g.seed;
      cmd_finetune(ft, std::cout);
    } else if (*train_cmd) {
      tr.config = resolve_config(g);
      tr.out_dir = require_out(g, "train");
      const auto art = cmd_train(tr, std::cerr);
      write_history(std::cout, art.outcome.history);
      std::cerr << "wrote " << art.checkpoint.string() << " and " << art.history.string() << "\n";
    } else if (*evaluate_cmd) {
      if (*others_flag) ev.score_others = ev_others;
      if (g.out.empty()) {
        cmd_evaluate(ev, std::cout);
      } else {
        std::ofstream report(g.out);
        if (!report) throw std::runtime_error("cannot write " + g.out);
        cmd_evaluate(ev, report);
      }
    } else if (*sweep) {
      sw.base = resolve_config(g);
      sw.out_dir = require_out(g, "sweep");
      sw.values = split_list(sw_values);
      if (!sw_seeds.empty()) {
        sw.seeds.clear();
        for (const auto& s : split_list(sw_seeds)) {
          std::size_t used = 0;
          const auto v = std::stoull(s, &used);
          if (used != s.size()) throw std::invalid_argument("--seeds: not an integer: '" + s + "'");
          sw.seeds.push_back(v);
        }
      }
      cmd_sweep(sw, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "emoctx: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
