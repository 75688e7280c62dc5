#include "ckgr/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ckgr/errors.hpp"

namespace ckgr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_value(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ParseError("config: bad value \"" + std::string(value) + "\" for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ParseError("config: bad boolean \"" + std::string(value) + "\" for " + std::string(key));
}

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

const std::vector<std::string>& ReasonerConfig::keys() {
  static const std::vector<std::string> k = {
      "max_depth",     "k_nodes",      "k_triples",    "k_answers",       "beam_width",
      "top_m_relations", "relation_filter", "allow_revisit", "seed",       "epochs",
      "learning_rate", "lr_decay",     "batch_size",   "train_top_m",     "adapter_enabled",
      "adapter_learning_rate", "embedding_dim", "relation_dim", "step_dim", "hidden",
      "knn_mode",      "knn_clusters", "knn_probes"};
  return k;
}

void ReasonerConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  using Size = std::size_t;
  if (key == "max_depth") max_depth = parse_value<Size>(key, value);
  else if (key == "k_nodes") k_nodes = parse_value<Size>(key, value);
  else if (key == "k_triples") k_triples = parse_value<Size>(key, value);
  else if (key == "k_answers") k_answers = parse_value<Size>(key, value);
  else if (key == "beam_width") beam_width = parse_value<Size>(key, value);
  else if (key == "top_m_relations") top_m_relations = parse_value<Size>(key, value);
  else if (key == "relation_filter") relation_filter = parse_bool(key, value);
  else if (key == "allow_revisit") allow_revisit = parse_bool(key, value);
  else if (key == "seed") seed = parse_value<std::uint64_t>(key, value);
  else if (key == "epochs") epochs = parse_value<Size>(key, value);
  else if (key == "learning_rate") learning_rate = parse_value<double>(key, value);
  else if (key == "lr_decay") lr_decay = parse_value<double>(key, value);
  else if (key == "batch_size") batch_size = parse_value<Size>(key, value);
  else if (key == "train_top_m") train_top_m = parse_value<Size>(key, value);
  else if (key == "adapter_enabled") adapter_enabled = parse_bool(key, value);
  else if (key == "adapter_learning_rate") adapter_learning_rate = parse_value<double>(key, value);
  else if (key == "embedding_dim") embedding_dim = parse_value<Size>(key, value);
  else if (key == "relation_dim") relation_dim = parse_value<Size>(key, value);
  else if (key == "step_dim") step_dim = parse_value<Size>(key, value);
  else if (key == "hidden") hidden = parse_value<Size>(key, value);
  else if (key == "knn_mode") {
    if (value == "exact") knn_mode = KnnMode::exact;
    else if (value == "approximate") knn_mode = KnnMode::approximate;
    else throw ParseError("config: knn_mode must be exact or approximate");
  } else if (key == "knn_clusters") knn_clusters = parse_value<Size>(key, value);
  else if (key == "knn_probes") knn_probes = parse_value<Size>(key, value);
  else throw ParseError("config: unknown key \"" + std::string(key) + "\"");
}

void ReasonerConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw UsageError(std::string("config: ") + name + " must be >= 1");
  };
  positive(max_depth, "max_depth");
  positive(k_nodes, "k_nodes");
  positive(k_triples, "k_triples");
  positive(k_answers, "k_answers");
  positive(beam_width, "beam_width");
  positive(top_m_relations, "top_m_relations");
  positive(batch_size, "batch_size");
  positive(relation_dim, "relation_dim");
  positive(step_dim, "step_dim");
  positive(hidden, "hidden");
  positive(knn_clusters, "knn_clusters");
  positive(knn_probes, "knn_probes");
  if (embedding_dim < 2) throw UsageError("config: embedding_dim must be >= 2");
  if (!(learning_rate > 0.0)) throw UsageError("config: learning_rate must be > 0");
  if (!(adapter_learning_rate > 0.0)) throw UsageError("config: adapter_learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw UsageError("config: lr_decay must be in (0, 1]");
}

std::string ReasonerConfig::render() const {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "max_depth = " << max_depth << '\n'
     << "k_nodes = " << k_nodes << '\n'
     << "k_triples = " << k_triples << '\n'
     << "k_answers = " << k_answers << '\n'
     << "beam_width = " << beam_width << '\n'
     << "top_m_relations = " << top_m_relations << '\n'
     << "relation_filter = " << b(relation_filter) << '\n'
     << "allow_revisit = " << b(allow_revisit) << '\n'
     << "seed = " << seed << '\n'
     << "epochs = " << epochs << '\n'
     << "learning_rate = " << format_double(learning_rate) << '\n'
     << "lr_decay = " << format_double(lr_decay) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "train_top_m = " << train_top_m << '\n'
     << "adapter_enabled = " << b(adapter_enabled) << '\n'
     << "adapter_learning_rate = " << format_double(adapter_learning_rate) << '\n'
     << "embedding_dim = " << embedding_dim << '\n'
     << "relation_dim = " << relation_dim << '\n'
     << "step_dim = " << step_dim << '\n'
     << "hidden = " << hidden << '\n'
     << "knn_mode = " << (knn_mode == KnnMode::exact ? "exact" : "approximate") << '\n'
     << "knn_clusters = " << knn_clusters << '\n'
     << "knn_probes = " << knn_probes << '\n';
  return os.str();
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text,
                                                                   std::string_view source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ParseError(where + ": expected \"key = value\"");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(where + ": expected \"key = value\"");
    ReasonerConfig probe;
    try {
      probe.set(key, value);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

ReasonerConfig resolve_config(const std::filesystem::path* config_file,
                              const std::vector<std::pair<std::string, std::string>>& overrides,
                              bool use_environment) {
  ReasonerConfig cfg;
  if (config_file) {
    std::ifstream in(*config_file, std::ios::binary);
    if (!in) throw LookupError("cannot open config file " + config_file->string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    for (const auto& [k, v] : parse_config_text(buffer.str(), config_file->string())) cfg.set(k, v);
  }
  if (use_environment) {
    for (const auto& key : ReasonerConfig::keys()) {
      std::string env = "ENGINE_" + key;
      std::transform(env.begin(), env.end(), env.begin(),
                     [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
      if (const char* v = std::getenv(env.c_str())) {
        try {
          cfg.set(key, v);
        } catch (const ParseError& e) {
          throw ParseError(env + ": " + e.what());
        }
      }
    }
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace ckgr
