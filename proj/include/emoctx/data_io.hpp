#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include "emoctx/config.hpp"
#include "emoctx/nn.hpp"
#include "emoctx/random.hpp"
#include "emoctx/tensor.hpp"
#include "emoctx/text.hpp"

namespace emoctx {

// Loader and format errors. Messages carry the file and line where known.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using LabelCounts = std::array<std::size_t, kNumClasses>;

struct DatasetSplit {
  Split name = Split::kTrain;
  std::vector<Conversation> conversations;
  LabelCounts label_counts{};
  bool labeled = false;  // every row carries a label
};

inline constexpr std::string_view kDatasetHeader = "id\tturn1\tturn2\tturn3\tlabel";
inline constexpr std::string_view kUnlabeledHeader = "id\tturn1\tturn2\tturn3";

DatasetSplit parse_dataset(std::istream& in, Split split, const std::string& source);
DatasetSplit load_dataset(const std::filesystem::path& path, Split split);

struct WordVectors {
  std::size_t dim = 0;
  std::vector<std::string> order;  // file order of first occurrences
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t duplicates = 0;

  const std::vector<double>* find(const std::string& token) const;
};

WordVectors parse_word_vectors(std::istream& in, std::size_t expected_dim, const std::string& source);
WordVectors load_word_vectors(const std::filesystem::path& path, std::size_t expected_dim);

// Writes every non-special vocabulary row as "token v1 ... v_dim".
void save_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab,
                       const EmbeddingMatrix& embedding);

struct SentenceVectorStore {
  std::size_t dim = 0;
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(const std::string& id) const;
  std::size_t size() const { return order.size(); }
};

// `expected_dim` 0 takes the dimension from the first line.
SentenceVectorStore parse_sentence_vectors(std::istream& in, std::size_t expected_dim,
                                           const std::string& source);
SentenceVectorStore load_sentence_vectors(const std::filesystem::path& path,
                                          std::size_t expected_dim);

struct EmbeddingInit {
  EmbeddingMatrix embedding;
  std::size_t found = 0;
  double coverage = 0.0;  // found / (vocab size - specials)
};

// Copies pretrained rows, draws the rest from U[-0.05, 0.05], zeroes <pad>.
EmbeddingInit build_embedding_matrix(const Vocabulary& vocab, const WordVectors& pretrained,
                                     std::size_t dim, Rng& rng);

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  Vocabulary vocab;
  std::vector<NamedArray> params;
  TrainConfig config;
  std::uint32_t epoch = 0;
  double best_val_f1 = 0.0;
};

// Binary layout, little-endian: "EMOC", u32 version, u32 epoch, f64 best F1,
// config text, vocabulary, then named arrays (name, rank, dims, f64 payload).
// Strings are u32-length-prefixed.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

TrainConfig load_config(const std::filesystem::path& path);

// Tokenized split produced by preprocessing: header "id\tlabel\ttokens\tids",
// tokens and ids space-separated, label "-" when absent.
void save_encoded_split(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs);
std::vector<TokenSequence> load_encoded_split(const std::filesystem::path& path);

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& path);

LabelCounts count_labels(const std::vector<TokenSequence>& seqs);

}  // namespace emoctx
