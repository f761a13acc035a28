#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emoctx/config.hpp"
#include "emoctx/data_io.hpp"
#include "emoctx/finetune.hpp"
#include "emoctx/text.hpp"

namespace testkit {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Three-turn conversations whose label is given away by one keyword in the
// last turn; the other words are shared filler.
std::vector<emoctx::Conversation> keyword_conversations(std::size_t count, std::uint64_t seed,
                                                        const std::string& id_prefix = "c");

struct ToyCorpus {
  emoctx::Vocabulary vocab;
  std::vector<emoctx::TokenSequence> train;
  std::vector<emoctx::TokenSequence> val;
};

// Runs the conversations through the real text pipeline.
ToyCorpus keyword_corpus(std::size_t train_count, std::size_t val_count, std::uint64_t seed);

void write_dataset(const fs::path& path, const std::vector<emoctx::Conversation>& conversations,
                   bool labeled = true);

// Small model settings that train in well under a second per epoch.
emoctx::TrainConfig tiny_config();

// Binary corpus where the label is the presence of "good".
std::vector<emoctx::TextLabel> good_corpus(std::size_t count, std::uint64_t seed);

// Writes train/dev/test files with exactly the given per-class counts.
void write_counted_dataset(const fs::path& path, const emoctx::LabelCounts& counts, std::uint64_t seed);

}  // namespace testkit
