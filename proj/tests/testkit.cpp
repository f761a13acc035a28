#include "testkit.hpp"

#include <atomic>
#include <fstream>
#include <stdexcept>

#include <unistd.h>

#include "emoctx/random.hpp"

namespace testkit {

using namespace emoctx;

namespace {

const std::vector<std::string> kFiller = {"i", "you", "the", "is", "so", "it", "me", "that", "was", "just"};
const std::vector<std::vector<std::string>> kKeywords = {
    {"yay", "awesome", "lol"},     // happy
    {"cry", "lonely", "miss"},     // sad
    {"hate", "stupid", "furious"}, // angry
    {"where", "tomorrow", "okay"}, // others
};

std::string filler_phrase(Rng& rng, std::size_t words) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += kFiller[rng() % kFiller.size()];
  }
  return out;
}

}  // namespace

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("emoctx_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<Conversation> keyword_conversations(std::size_t count, std::uint64_t seed,
                                                const std::string& id_prefix) {
  Rng rng(seed);
  std::vector<Conversation> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % kNumClasses;
    Conversation c;
    c.id = id_prefix + std::to_string(i);
    c.turns[0] = filler_phrase(rng, 2 + rng() % 3);
    c.turns[1] = filler_phrase(rng, 1 + rng() % 3);
    const auto& words = kKeywords[label];
    c.turns[2] = filler_phrase(rng, 1 + rng() % 2) + " " + words[rng() % words.size()] + " " +
                 filler_phrase(rng, rng() % 2) + "!";
    c.label = emotion_at(label);
    out.push_back(std::move(c));
  }
  Rng order(seed + 1000);
  shuffle_in_place(out, order);
  return out;
}

ToyCorpus keyword_corpus(std::size_t train_count, std::size_t val_count, std::uint64_t seed) {
  ToyCorpus corpus;
  for (const auto& c : keyword_conversations(train_count, seed, "t")) corpus.train.push_back(assemble_input(c));
  for (const auto& c : keyword_conversations(val_count, seed + 7, "v")) corpus.val.push_back(assemble_input(c));
  corpus.vocab = build_vocab(corpus.train);
  for (auto& s : corpus.train) s = encode_ids(std::move(s), corpus.vocab);
  for (auto& s : corpus.val) s = encode_ids(std::move(s), corpus.vocab);
  return corpus;
}

void write_dataset(const fs::path& path, const std::vector<Conversation>& conversations, bool labeled) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (labeled ? kDatasetHeader : kUnlabeledHeader) << '\n';
  for (const auto& c : conversations) {
    out << c.id << '\t' << c.turns[0] << '\t' << c.turns[1] << '\t' << c.turns[2];
    if (labeled) out << '\t' << to_string(*c.label);
    out << '\n';
  }
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.hidden_size = 6;
  c.num_layers = 1;
  c.embedding_dim = 8;
  c.projection_size = 8;
  c.sentence_dim = 0;
  c.batch_size = 8;
  c.lr = 0.01;
  c.dropout_bilstm = 0.0;
  c.dropout_linear = 0.0;
  c.freeze_embedding_epochs = 0;
  return c;
}

std::vector<TextLabel> good_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  static const std::vector<std::string> words = {"the", "movie", "was", "a", "day",  "this",  "food",
                                                 "my",  "phone", "is",  "it", "just", "today", "ok"};
  std::vector<TextLabel> out;
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<std::string> toks;
    const std::size_t n = 3 + rng() % 4;
    for (std::size_t k = 0; k < n; ++k) toks.push_back(words[rng() % words.size()]);
    if (label == 1) toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(rng() % (toks.size() + 1)), "good");
    std::string text;
    for (const auto& t : toks) text += (text.empty() ? "" : " ") + t;
    out.push_back({text, label});
  }
  return out;
}

void write_counted_dataset(const fs::path& path, const LabelCounts& counts, std::uint64_t seed) {
  std::vector<Conversation> rows;
  std::size_t next = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      Conversation conv;
      conv.id = std::to_string(next++);
      conv.turns = {"hey", "hello", "how are you"};
      conv.label = emotion_at(c);
      rows.push_back(std::move(conv));
    }
  }
  Rng rng(seed);
  shuffle_in_place(rows, rng);
  write_dataset(path, rows);
}

}  // namespace testkit
