#include "emoctx/config.hpp"

#include <charconv>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace emoctx {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

std::uint64_t parse_unsigned(const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not a count");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean");
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << d;
  return os.str();
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename T>
Field count_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_unsigned(v)); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(double TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.*member = parse_double(v); },
          [member](const TrainConfig& c) { return fmt_double(c.*member); }};
}

Field bool_field(bool TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) { c.*member = parse_bool(v); },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

// Ordered so that to_text is canonical.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"lr", real_field(&TrainConfig::lr)},
      {"batch_size", count_field(&TrainConfig::batch_size)},
      {"epochs", count_field(&TrainConfig::epochs)},
      {"clip_norm", real_field(&TrainConfig::clip_norm)},
      {"anneal_factor", real_field(&TrainConfig::anneal_factor)},
      {"anneal_after_epoch", count_field(&TrainConfig::anneal_after_epoch)},
      {"freeze_embedding_epochs", count_field(&TrainConfig::freeze_embedding_epochs)},
      {"dropout_bilstm", real_field(&TrainConfig::dropout_bilstm)},
      {"dropout_linear", real_field(&TrainConfig::dropout_linear)},
      {"hidden_size", count_field(&TrainConfig::hidden_size)},
      {"num_layers", count_field(&TrainConfig::num_layers)},
      {"seed", count_field(&TrainConfig::seed)},
      {"sentence_dim", count_field(&TrainConfig::sentence_dim)},
      {"embedding_dim", count_field(&TrainConfig::embedding_dim)},
      {"projection_size", count_field(&TrainConfig::projection_size)},
      {"max_tokens", count_field(&TrainConfig::max_tokens)},
      {"dropout_sentence", bool_field(&TrainConfig::dropout_sentence)},
      {"pool_activation",
       {[](TrainConfig& c, const std::string& v) {
          if (v == "none") c.pool_activation = PoolActivation::kNone;
          else if (v == "tanh") c.pool_activation = PoolActivation::kTanh;
          else throw std::invalid_argument("expected none or tanh");
        },
        [](const TrainConfig& c) {
          return std::string(c.pool_activation == PoolActivation::kTanh ? "tanh" : "none");
        }}},
      {"select",
       {[](TrainConfig& c, const std::string& v) {
          if (v == "best") c.select = Selection::kBest;
          else if (v == "last") c.select = Selection::kLast;
          else throw std::invalid_argument("expected best or last");
        },
        [](const TrainConfig& c) { return std::string(c.select == Selection::kLast ? "last" : "best"); }}},
      {"score_others", bool_field(&TrainConfig::score_others)},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (!(c.lr > 0.0)) fail("lr must be positive");
  if (c.batch_size == 0) fail("batch_size must be at least 1");
  if (c.epochs == 0) fail("epochs must be at least 1");
  if (!(c.clip_norm > 0.0)) fail("clip_norm must be positive");
  if (!(c.anneal_factor > 0.0)) fail("anneal_factor must be positive");
  if (!(c.dropout_bilstm >= 0.0 && c.dropout_bilstm < 1.0)) fail("dropout_bilstm outside [0, 1)");
  if (!(c.dropout_linear >= 0.0 && c.dropout_linear < 1.0)) fail("dropout_linear outside [0, 1)");
  if (c.hidden_size == 0) fail("hidden_size must be at least 1");
  if (c.num_layers == 0) fail("num_layers must be at least 1");
  if (c.embedding_dim == 0) fail("embedding_dim must be at least 1");
  if (c.projection_size == 0) fail("projection_size must be at least 1");
  if (c.max_tokens == 0) fail("max_tokens must be at least 1");
}

std::string to_text(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  const Field* field = find_field(key);
  if (!field) throw std::invalid_argument("config: unknown key '" + key + "'");
  try {
    field->set(config, value);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: cannot parse value '" + value + "' for key '" + key + "'");
  }
}

TrainConfig parse_config(std::istream& in, const std::string& source) {
  TrainConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  validate(config);
  return config;
}

TrainConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::uint64_t config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace emoctx
