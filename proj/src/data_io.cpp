#include "emoctx/data_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace emoctx {

namespace {

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

// Parses whitespace-separated decimals from `text` starting at `pos`.
std::vector<double> parse_numbers(std::string_view text, const std::string& where) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    if (pos >= text.size()) break;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), v);
    if (ec != std::errc()) throw FormatError(where + ": bad number");
    pos = static_cast<std::size_t>(ptr - text.data());
    if (pos < text.size() && text[pos] != ' ' && text[pos] != '\t') {
      throw FormatError(where + ": bad number");
    }
    out.push_back(v);
  }
  return out;
}

std::string fmt_double(double d) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, ptr);
}

// ---- little-endian binary helpers ----

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  void le(std::uint64_t v, int bytes) {
    char buf[8];
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf, bytes);
  }
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(source_ + ": truncated checkpoint");
    }
  }

 private:
  std::uint64_t le(int bytes) {
    unsigned char buf[8];
    read(reinterpret_cast<char*>(buf), static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
  std::string source_;
};

constexpr char kMagic[4] = {'E', 'M', 'O', 'C'};

}  // namespace

// ---- dataset ---------------------------------------------------------------

DatasetSplit parse_dataset(std::istream& in, Split split, const std::string& source) {
  DatasetSplit ds;
  ds.name = split;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file, expected header");
  strip_cr(line);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != kDatasetHeader && line != kUnlabeledHeader) {
    throw FormatError(source + ": line 1: header must be '" + std::string(kDatasetHeader) + "'");
  }
  std::size_t line_no = 1;
  bool all_labeled = true;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_on(line, '\t');
    if (fields.size() != 4 && fields.size() != 5) {
      throw FormatError(source + ": line " + std::to_string(line_no) + ": expected 4 or 5 fields, got " +
                        std::to_string(fields.size()));
    }
    Conversation conv;
    conv.id = fields[0];
    conv.turns = {fields[1], fields[2], fields[3]};
    if (fields.size() == 5 && !fields[4].empty()) {
      auto label = parse_emotion(fields[4]);
      if (!label) {
        throw FormatError(source + ": line " + std::to_string(line_no) + ": unknown label '" +
                          fields[4] + "'");
      }
      conv.label = label;
      ++ds.label_counts[index_of(*label)];
    } else {
      all_labeled = false;
    }
    ds.conversations.push_back(std::move(conv));
  }
  ds.labeled = all_labeled && !ds.conversations.empty();
  return ds;
}

DatasetSplit load_dataset(const std::filesystem::path& path, Split split) {
  auto in = open_in(path);
  return parse_dataset(in, split, path.string());
}

// ---- word vectors ----------------------------------------------------------

const std::vector<double>* WordVectors::find(const std::string& token) const {
  auto it = vectors.find(token);
  return it == vectors.end() ? nullptr : &it->second;
}

WordVectors parse_word_vectors(std::istream& in, std::size_t expected_dim, const std::string& source) {
  WordVectors wv;
  wv.dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto sp = line.find_first_of(" \t");
    const std::string where = source + ": line " + std::to_string(line_no);
    if (sp == std::string::npos) throw FormatError(where + ": no vector values");
    std::string token = line.substr(0, sp);
    auto values = parse_numbers(std::string_view(line).substr(sp), where);
    if (values.size() != expected_dim) {
      throw FormatError(where + ": expected " + std::to_string(expected_dim) + " values, got " +
                        std::to_string(values.size()));
    }
    if (wv.vectors.count(token)) {
      ++wv.duplicates;
      continue;
    }
    wv.order.push_back(token);
    wv.vectors.emplace(std::move(token), std::move(values));
  }
  return wv;
}

WordVectors load_word_vectors(const std::filesystem::path& path, std::size_t expected_dim) {
  auto in = open_in(path);
  return parse_word_vectors(in, expected_dim, path.string());
}

void save_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab,
                       const EmbeddingMatrix& embedding) {
  auto out = open_out(path);
  const std::size_t dim = embedding.dim();
  const auto values = embedding.table.values();
  for (std::size_t id = kNumSpecialTokens; id < vocab.size(); ++id) {
    out << vocab.token(id);
    for (std::size_t j = 0; j < dim; ++j) out << ' ' << fmt_double(values[id * dim + j]);
    out << '\n';
  }
}

// ---- sentence vectors ------------------------------------------------------

const std::vector<double>* SentenceVectorStore::find(const std::string& id) const {
  auto it = vectors.find(id);
  return it == vectors.end() ? nullptr : &it->second;
}

SentenceVectorStore parse_sentence_vectors(std::istream& in, std::size_t expected_dim,
                                           const std::string& source) {
  SentenceVectorStore store;
  store.dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::string where = source + ": line " + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(where + ": expected 'id<TAB>values'");
    std::string id = line.substr(0, tab);
    auto values = parse_numbers(std::string_view(line).substr(tab + 1), where);
    if (store.dim == 0) store.dim = values.size();
    if (values.size() != store.dim || values.empty()) {
      throw FormatError(where + ": expected " + std::to_string(store.dim) + " values, got " +
                        std::to_string(values.size()));
    }
    if (store.vectors.count(id)) throw FormatError(where + ": duplicate id '" + id + "'");
    store.order.push_back(id);
    store.vectors.emplace(std::move(id), std::move(values));
  }
  return store;
}

SentenceVectorStore load_sentence_vectors(const std::filesystem::path& path,
                                          std::size_t expected_dim) {
  auto in = open_in(path);
  return parse_sentence_vectors(in, expected_dim, path.string());
}

// ---- embedding matrix ------------------------------------------------------

EmbeddingInit build_embedding_matrix(const Vocabulary& vocab, const WordVectors& pretrained,
                                     std::size_t dim, Rng& rng) {
  if (pretrained.dim != dim && !pretrained.vectors.empty()) {
    throw std::invalid_argument("build_embedding_matrix: pretrained dim " +
                                std::to_string(pretrained.dim) + " != " + std::to_string(dim));
  }
  EmbeddingInit init;
  std::vector<double> table(vocab.size() * dim, 0.0);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (id == kPadId) continue;
    double* row = table.data() + id * dim;
    const auto* vec = id >= kNumSpecialTokens ? pretrained.find(vocab.token(id)) : nullptr;
    if (vec) {
      std::copy(vec->begin(), vec->end(), row);
      ++init.found;
    } else {
      for (std::size_t j = 0; j < dim; ++j) row[j] = uniform(rng, -0.05, 0.05);
    }
  }
  const std::size_t regular = vocab.size() - kNumSpecialTokens;
  init.coverage = regular == 0 ? 0.0 : static_cast<double>(init.found) / static_cast<double>(regular);
  init.embedding.table = Tensor({vocab.size(), dim}, std::move(table), true);
  return init;
}

// ---- checkpoint ------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto out = open_out(path, true);
  out.write(kMagic, 4);
  Writer w(out);
  w.u32(ckpt.format_version);
  w.u32(ckpt.epoch);
  w.f64(ckpt.best_val_f1);
  w.str(to_text(ckpt.config));
  w.u32(static_cast<std::uint32_t>(ckpt.vocab.size()));
  for (const auto& tok : ckpt.vocab.tokens()) w.str(tok);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u64(d);
    w.u64(p.values.size());
    for (double v : p.values) w.f64(v);
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  const std::string source = path.string();
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(source + ": not a checkpoint file");
  }
  Reader r(in, source);
  Checkpoint ckpt;
  ckpt.format_version = r.u32();
  if (ckpt.format_version != kCheckpointVersion) {
    throw FormatError(source + ": checkpoint version " + std::to_string(ckpt.format_version) +
                      " is not supported by this reader (version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  ckpt.epoch = r.u32();
  ckpt.best_val_f1 = r.f64();
  ckpt.config = parse_config_string(r.str());
  const auto vocab_size = r.u32();
  std::vector<std::string> tokens(vocab_size);
  for (auto& t : tokens) t = r.str();
  if (vocab_size < kNumSpecialTokens || tokens[kPadId] != kPadToken || tokens[kUnkId] != kUnkToken ||
      tokens[kEosId] != kEosToken) {
    throw FormatError(source + ": vocabulary lacks the reserved tokens");
  }
  for (std::size_t i = kNumSpecialTokens; i < tokens.size(); ++i) ckpt.vocab.add(tokens[i]);
  if (ckpt.vocab.size() != vocab_size) throw FormatError(source + ": duplicate vocabulary entries");
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str();
    const auto rank = r.u32();
    if (rank > 8) throw FormatError(source + ": implausible rank for '" + a.name + "'");
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(r.u64());
    const auto n = r.u64();
    if (n != shape_product(a.shape)) {
      throw FormatError(source + ": array '" + a.name + "' size does not match its shape");
    }
    a.values.resize(n);
    for (auto& v : a.values) v = r.f64();
    ckpt.params.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(source + ": trailing bytes after checkpoint payload");
  }
  return ckpt;
}

TrainConfig load_config(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_config(in, path.string());
}

// ---- encoded splits & vocabulary -------------------------------------------

void save_encoded_split(const std::filesystem::path& path, const std::vector<TokenSequence>& seqs) {
  auto out = open_out(path);
  out << "id\tlabel\ttokens\tids\n";
  for (const auto& s : seqs) {
    out << s.id << '\t' << (s.label ? to_string(*s.label) : "-") << '\t';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << (i ? " " : "") << s.tokens[i];
    out << '\t';
    for (std::size_t i = 0; i < s.ids.size(); ++i) out << (i ? " " : "") << s.ids[i];
    out << '\n';
  }
}

std::vector<TokenSequence> load_encoded_split(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line) || (strip_cr(line), line != "id\tlabel\ttokens\tids")) {
    throw FormatError(source + ": line 1: not an encoded split file");
  }
  std::vector<TokenSequence> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::string where = source + ": line " + std::to_string(line_no);
    auto fields = split_on(line, '\t');
    if (fields.size() != 4) throw FormatError(where + ": expected 4 fields");
    TokenSequence s;
    s.id = fields[0];
    if (fields[1] != "-") {
      s.label = parse_emotion(fields[1]);
      if (!s.label) throw FormatError(where + ": unknown label '" + fields[1] + "'");
    }
    std::istringstream toks(fields[2]);
    for (std::string t; toks >> t;) s.tokens.push_back(t);
    for (double v : parse_numbers(fields[3], where)) {
      if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
        throw FormatError(where + ": bad id");
      }
      s.ids.push_back(static_cast<std::size_t>(v));
    }
    if (s.ids.size() != s.tokens.size()) throw FormatError(where + ": token/id count mismatch");
    out.push_back(std::move(s));
  }
  return out;
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto out = open_out(path);
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    strip_cr(line);
    tokens.push_back(line);
  }
  if (tokens.size() < kNumSpecialTokens || tokens[kPadId] != kPadToken ||
      tokens[kUnkId] != kUnkToken || tokens[kEosId] != kEosToken) {
    throw FormatError(path.string() + ": vocabulary lacks the reserved tokens");
  }
  Vocabulary vocab;
  for (std::size_t i = kNumSpecialTokens; i < tokens.size(); ++i) vocab.add(tokens[i]);
  if (vocab.size() != tokens.size()) throw FormatError(path.string() + ": duplicate entries");
  return vocab;
}

LabelCounts count_labels(const std::vector<TokenSequence>& seqs) {
  LabelCounts counts{};
  for (const auto& s : seqs) {
    if (s.label) ++counts[index_of(*s.label)];
  }
  return counts;
}

}  // namespace emoctx
