#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "emoctx/data_io.hpp"
#include "emoctx/rcnn.hpp"
#include "emoctx/train.hpp"
#include "testkit.hpp"

using namespace emoctx;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Checkpoint sample_checkpoint() {
  TrainConfig cfg = testkit::tiny_config();
  auto corpus = testkit::keyword_corpus(8, 4, 3);
  Rng rng(cfg.seed);
  auto emb = build_embedding_matrix(corpus.vocab, WordVectors{cfg.embedding_dim, {}, {}, 0}, cfg.embedding_dim, rng);
  auto params = init_model(cfg, emb.embedding, rng);
  Checkpoint ckpt;
  ckpt.vocab = corpus.vocab;
  ckpt.params = to_arrays(params);
  ckpt.config = cfg;
  ckpt.epoch = 3;
  ckpt.best_val_f1 = 0.625;
  return ckpt;
}

}  // namespace

TEST(LoadDataset, HandcraftedRows) {
  std::istringstream in(
      "id\tturn1\tturn2\tturn3\tlabel\n"
      "0\tDon't worry  I'm girl\thmm how do I know if u r\twhat's ur name?\tothers\n"
      "1\tbad\tBad bad!\tHAPPY\tHappy\n");
  const auto ds = parse_dataset(in, Split::kTrain, "mem");
  ASSERT_EQ(ds.conversations.size(), 2u);
  EXPECT_EQ(ds.conversations[0].turns[0], "Don't worry  I'm girl");
  EXPECT_EQ(ds.conversations[1].turns[2], "HAPPY");
  EXPECT_EQ(ds.conversations[1].label, Emotion::kHappy);
  EXPECT_EQ(ds.label_counts, (LabelCounts{1, 0, 0, 1}));
  EXPECT_TRUE(ds.labeled);
}

TEST(LoadDataset, WrongFieldCountNamesLine) {
  std::istringstream in(
      "id\tturn1\tturn2\tturn3\tlabel\n"
      "0\ta\tb\tc\tsad\n"
      "1\ta\tb\tc\tsad\n"
      "2\ta\tb\tc\tsad\n"
      "3\ta\tb\n");
  const auto msg = message_of([&] { parse_dataset(in, Split::kTrain, "mem"); });
  EXPECT_TRUE(contains(msg, "line 5: expected 4 or 5 fields")) << msg;
}

TEST(LoadDataset, UnknownLabelAndBadHeader) {
  std::istringstream bad_label("id\tturn1\tturn2\tturn3\tlabel\n0\ta\tb\tc\tjoyful\n");
  EXPECT_TRUE(contains(message_of([&] { parse_dataset(bad_label, Split::kTrain, "mem"); }), "unknown label"));
  std::istringstream bad_header("id,turn1,turn2,turn3,label\n");
  EXPECT_THROW(parse_dataset(bad_header, Split::kTrain, "mem"), FormatError);
}

TEST(LoadDataset, UnlabeledTestFile) {
  std::istringstream in("id\tturn1\tturn2\tturn3\n7\ta\tb\tc\n");
  const auto ds = parse_dataset(in, Split::kTest, "mem");
  EXPECT_FALSE(ds.labeled);
  EXPECT_FALSE(ds.conversations[0].label.has_value());
}

TEST(LoadDataset, CrlfAndBom) {
  std::istringstream in("\xEF\xBB\xBFid\tturn1\tturn2\tturn3\tlabel\r\n0\ta\tb\tc\tsad\r\n");
  const auto ds = parse_dataset(in, Split::kTrain, "mem");
  ASSERT_EQ(ds.conversations.size(), 1u);
  EXPECT_EQ(ds.conversations[0].label, Emotion::kSad);
}

TEST(LoadDataset, MissingFileThrows) {
  EXPECT_THROW(load_dataset("/nonexistent/train.txt", Split::kTrain), FormatError);
}

TEST(LoadDataset, CountsRoundTripThroughFile) {
  testkit::TempDir dir("ds");
  const LabelCounts counts{42, 12, 15, 233};
  testkit::write_counted_dataset(dir / "dev.txt", counts, 5);
  EXPECT_EQ(load_dataset(dir / "dev.txt", Split::kVal).label_counts, counts);
}

TEST(WordVectors, ParsesLines) {
  std::istringstream in("hello 0.1 0.2\nworld -1 2.5e-1\n");
  const auto wv = parse_word_vectors(in, 2, "mem");
  EXPECT_EQ(*wv.find("hello"), (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(wv.order, (std::vector<std::string>{"hello", "world"}));
  EXPECT_EQ(wv.find("nope"), nullptr);
}

TEST(WordVectors, WrongDimensionThrows) {
  std::string line = "tok";
  for (int i = 0; i < 99; ++i) line += " 0.5";
  std::istringstream in(line + "\n");
  const auto msg = message_of([&] { parse_word_vectors(in, 100, "mem"); });
  EXPECT_TRUE(contains(msg, "expected 100 values, got 99")) << msg;
}

TEST(WordVectors, DuplicatesKeepFirst) {
  std::istringstream in("a 1\na 2\n");
  const auto wv = parse_word_vectors(in, 1, "mem");
  EXPECT_EQ(*wv.find("a"), std::vector<double>{1});
  EXPECT_EQ(wv.duplicates, 1u);
}

TEST(SentenceVectors, ParsesAndInfersDim) {
  std::istringstream in("c1\t0 0 0\nc2\t1 2 3\n");
  const auto s = parse_sentence_vectors(in, 0, "mem");
  EXPECT_EQ(s.dim, 3u);
  EXPECT_EQ(*s.find("c1"), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(s.size(), 2u);
}

TEST(SentenceVectors, Errors) {
  std::istringstream wrong("c1\t0 0\n");
  EXPECT_THROW(parse_sentence_vectors(wrong, 3, "mem"), FormatError);
  std::istringstream dup("c1\t0\nc1\t1\n");
  EXPECT_THROW(parse_sentence_vectors(dup, 1, "mem"), FormatError);
}

TEST(EmbeddingMatrix, CopiesPretrainedAndZeroesPad) {
  Vocabulary vocab;
  vocab.add("known");
  vocab.add("unknown");
  std::istringstream in("known 0.5 -0.25\nother 9 9\n");
  const auto wv = parse_word_vectors(in, 2, "mem");
  Rng rng(1);
  const auto init = build_embedding_matrix(vocab, wv, 2, rng);
  const auto& t = init.embedding.table;
  EXPECT_EQ(t.shape(), (Shape{5, 2}));
  EXPECT_EQ(t.at(0, 0), 0.0);
  EXPECT_EQ(t.at(0, 1), 0.0);
  EXPECT_EQ(t.at(3, 0), 0.5);
  EXPECT_EQ(t.at(3, 1), -0.25);
  EXPECT_LE(std::abs(t.at(4, 0)), 0.05);
  EXPECT_EQ(init.found, 1u);
  EXPECT_DOUBLE_EQ(init.coverage, 0.5);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testkit::TempDir dir("ckpt");
  const auto ckpt = sample_checkpoint();
  save_checkpoint(ckpt, dir / "a.bin");
  const auto back = load_checkpoint(dir / "a.bin");
  EXPECT_EQ(back.params, ckpt.params);
  EXPECT_EQ(back.vocab, ckpt.vocab);
  EXPECT_EQ(back.config, ckpt.config);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.best_val_f1, 0.625);
  save_checkpoint(back, dir / "b.bin");
  EXPECT_EQ(read_file(dir / "a.bin"), read_file(dir / "b.bin"));
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  testkit::TempDir dir("ckpt_eval");
  const auto ckpt = sample_checkpoint();
  save_checkpoint(ckpt, dir / "a.bin");
  const auto back = load_checkpoint(dir / "a.bin");
  const auto corpus = testkit::keyword_corpus(8, 4, 3);
  const auto p1 = predict_probabilities(from_arrays(ckpt.params, ckpt.config), corpus.val, nullptr, ckpt.config);
  const auto p2 = predict_probabilities(from_arrays(back.params, back.config), corpus.val, nullptr, back.config);
  EXPECT_EQ(p1, p2);
}

TEST(Checkpoint, CorruptedMagic) {
  testkit::TempDir dir("ckpt_magic");
  save_checkpoint(sample_checkpoint(), dir / "a.bin");
  auto bytes = read_file(dir / "a.bin");
  bytes[0] = 'X';
  write_file(dir / "a.bin", bytes);
  const auto msg = message_of([&] { load_checkpoint(dir / "a.bin"); });
  EXPECT_TRUE(contains(msg, "not a checkpoint file")) << msg;
}

TEST(Checkpoint, UnsupportedVersion) {
  testkit::TempDir dir("ckpt_version");
  save_checkpoint(sample_checkpoint(), dir / "a.bin");
  auto bytes = read_file(dir / "a.bin");
  bytes[4] = 2;  // little-endian u32 version follows the magic
  write_file(dir / "a.bin", bytes);
  const auto msg = message_of([&] { load_checkpoint(dir / "a.bin"); });
  EXPECT_TRUE(contains(msg, "version 2")) << msg;
}

TEST(Checkpoint, TruncatedAndTrailing) {
  testkit::TempDir dir("ckpt_trunc");
  save_checkpoint(sample_checkpoint(), dir / "a.bin");
  const auto bytes = read_file(dir / "a.bin");
  write_file(dir / "short.bin", bytes.substr(0, bytes.size() - 9));
  EXPECT_TRUE(contains(message_of([&] { load_checkpoint(dir / "short.bin"); }), "truncated"));
  write_file(dir / "long.bin", bytes + "x");
  EXPECT_TRUE(contains(message_of([&] { load_checkpoint(dir / "long.bin"); }), "trailing"));
}

TEST(Config, EmptyFileGivesDefaults) {
  testkit::TempDir dir("cfg");
  write_file(dir / "c.txt", "");
  const auto c = load_config(dir / "c.txt");
  EXPECT_EQ(c.lr, 0.0005);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.epochs, 6u);
  EXPECT_EQ(c.clip_norm, 5.0);
  EXPECT_EQ(c.anneal_factor, 0.2);
  EXPECT_EQ(c.anneal_after_epoch, 5u);
  EXPECT_EQ(c.freeze_embedding_epochs, 2u);
  EXPECT_EQ(c.dropout_bilstm, 0.5);
  EXPECT_EQ(c.dropout_linear, 0.7);
  EXPECT_EQ(c.hidden_size, 200u);
  EXPECT_EQ(c.num_layers, 2u);
  EXPECT_EQ(c.sentence_dim, 2304u);
  EXPECT_EQ(c.embedding_dim, 100u);
  EXPECT_EQ(c, TrainConfig{});
}

TEST(Config, OverridesAndComments) {
  const auto c = parse_config_string("# sweep point\nhidden_size = 300\n  lr=0.001  # faster\n");
  EXPECT_EQ(c.hidden_size, 300u);
  EXPECT_EQ(c.lr, 0.001);
  EXPECT_EQ(c.batch_size, 64u);
}

TEST(Config, Errors) {
  EXPECT_TRUE(contains(message_of([] { parse_config_string("lr = abc\n"); }), ":1: config: cannot parse value"));
  EXPECT_THROW(parse_config_string("learning_rate = 0.1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config_string("lr 0.1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config_string("batch_size = -3\n"), std::invalid_argument);
  EXPECT_THROW(parse_config_string("dropout_linear = 1.0\n"), std::invalid_argument);
  EXPECT_THROW(parse_config_string("pool_activation = relu\n"), std::invalid_argument);
}

TEST(Config, CanonicalTextRoundTrips) {
  TrainConfig c;
  c.lr = 0.1 + 0.2;  // not exactly representable in short form
  c.pool_activation = PoolActivation::kTanh;
  c.select = Selection::kLast;
  c.score_others = true;
  const auto back = parse_config_string(to_text(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(config_hash(back), config_hash(c));
  TrainConfig d = c;
  d.seed = 2;
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(EncodedSplit, RoundTrip) {
  testkit::TempDir dir("enc");
  auto corpus = testkit::keyword_corpus(6, 2, 4);
  corpus.val[0].label.reset();
  save_encoded_split(dir / "s.tsv", corpus.val);
  const auto back = load_encoded_split(dir / "s.tsv");
  ASSERT_EQ(back.size(), corpus.val.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, corpus.val[i].id);
    EXPECT_EQ(back[i].tokens, corpus.val[i].tokens);
    EXPECT_EQ(back[i].ids, corpus.val[i].ids);
    EXPECT_EQ(back[i].label, corpus.val[i].label);
  }
  save_vocabulary(dir / "v.txt", corpus.vocab);
  EXPECT_EQ(load_vocabulary(dir / "v.txt"), corpus.vocab);
}

TEST(WordVectors, SaveThenLoad) {
  testkit::TempDir dir("wv");
  Vocabulary vocab;
  vocab.add("x");
  vocab.add("y");
  Rng rng(3);
  WordVectors none;
  none.dim = 3;
  const auto init = build_embedding_matrix(vocab, none, 3, rng);
  save_word_vectors(dir / "w.txt", vocab, init.embedding);
  const auto back = load_word_vectors(dir / "w.txt", 3);
  EXPECT_EQ(back.order, (std::vector<std::string>{"x", "y"}));
  const auto v = init.embedding.table.values();
  EXPECT_EQ(*back.find("y"), (std::vector<double>(v.begin() + 12, v.begin() + 15)));
}
