// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <fmt/format.h>

#include <array>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

extern char** environ;

namespace sibtree::cli {
namespace {

constexpr std::array<const char*, 6> kSections = {"search", "generation", "critique", "pipeline", "mock", "reward"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void skip_space(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
}

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::optional<nlohmann::json> parse_literal(std::string_view s, std::size_t& pos);

std::optional<nlohmann::json> parse_basic_string(std::string_view s, std::size_t& pos) {
  std::string out;
  ++pos;  // opening quote
  while (pos < s.size()) {
    const char c = s[pos++];
    if (c == '"') return nlohmann::json(out);
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (pos >= s.size()) return std::nullopt;
    const char e = s[pos++];
    switch (e) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case '/': out.push_back('/'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case 'b': out.push_back('\b'); break;
      case 'f': out.push_back('\f'); break;
      case 'u': {
        if (pos + 4 > s.size()) return std::nullopt;
        unsigned cp = 0;
        for (int i = 0; i < 4; ++i) {
          const char h = s[pos++];
          if (!std::isxdigit(static_cast<unsigned char>(h))) return std::nullopt;
          cp = cp * 16 + static_cast<unsigned>(std::isdigit(static_cast<unsigned char>(h))
                                                   ? h - '0'
                                                   : std::tolower(static_cast<unsigned char>(h)) - 'a' + 10);
        }
        append_utf8(out, cp);
        break;
      }
      default: return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<nlohmann::json> parse_number(std::string_view s, std::size_t& pos) {
  static const std::regex kNumber(R"(^[+-]?[0-9][0-9_]*(\.[0-9][0-9_]*)?([eE][+-]?[0-9]+)?)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(s.begin() + static_cast<std::ptrdiff_t>(pos), s.end(), m, kNumber)) return std::nullopt;
  std::string text;
  for (char c : m.str(0)) {
    if (c != '_') text.push_back(c);
  }
  pos += static_cast<std::size_t>(m.length(0));
  const bool is_float = m[1].matched || m[2].matched;
  errno = 0;
  if (is_float) return nlohmann::json(std::strtod(text.c_str(), nullptr));
  if (text.front() == '-') {
    const long long v = std::strtoll(text.c_str(), nullptr, 10);
    if (errno == ERANGE) return std::nullopt;
    return nlohmann::json(v);
  }
  const unsigned long long v = std::strtoull(text.c_str() + (text.front() == '+' ? 1 : 0), nullptr, 10);
  if (errno == ERANGE) return std::nullopt;
  return nlohmann::json(static_cast<std::uint64_t>(v));
}

std::optional<nlohmann::json> parse_literal(std::string_view s, std::size_t& pos) {
  skip_space(s, pos);
  if (pos >= s.size()) return std::nullopt;
  const char c = s[pos];
  if (c == '"') return parse_basic_string(s, pos);
  if (c == '\'') {
    const std::size_t end = s.find('\'', pos + 1);
    if (end == std::string_view::npos) return std::nullopt;
    nlohmann::json v = std::string(s.substr(pos + 1, end - pos - 1));
    pos = end + 1;
    return v;
  }
  if (c == '[') {
    ++pos;
    nlohmann::json items = nlohmann::json::array();
    for (;;) {
      skip_space(s, pos);
      if (pos < s.size() && s[pos] == ']') {
        ++pos;
        return items;
      }
      auto item = parse_literal(s, pos);
      if (!item || item->is_array()) return std::nullopt;
      items.push_back(std::move(*item));
      skip_space(s, pos);
      if (pos < s.size() && s[pos] == ',') {
        ++pos;
      } else if (pos >= s.size() || s[pos] != ']') {
        return std::nullopt;
      }
    }
  }
  if (s.substr(pos, 4) == "true") {
    pos += 4;
    return nlohmann::json(true);
  }
  if (s.substr(pos, 5) == "false") {
    pos += 5;
    return nlohmann::json(false);
  }
  return parse_number(s, pos);
}

// Position of a '#' that starts a comment, ignoring ones inside strings.
std::size_t comment_start(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return i;
    }
  }
  return std::string_view::npos;
}

bool is_key(std::string_view s) {
  if (s.empty()) return false;
  for (unsigned char c : s) {
    if (!(std::isalnum(c) || c == '_' || c == '-')) return false;
  }
  return true;
}

std::string render_value(const nlohmann::json& v) {
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i > 0) out += ", ";
      out += render_value(v[i]);
    }
    return out + "]";
  }
  // JSON string escapes are valid in basic strings.
  return v.dump();
}

// Consumes entries from a copy of the document; anything left over is unknown.
class Reader {
 public:
  explicit Reader(ConfigDoc doc) : doc_(std::move(doc)) {}

  const nlohmann::json* take(const std::string& section, const std::string& key) {
    auto s = doc_.find(section);
    if (s == doc_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    taken_ = k->second;
    s->second.erase(k);
    return &taken_;
  }

  void real(const std::string& section, const std::string& key, double& dst) {
    if (const auto* v = take(section, key)) {
      if (!v->is_number()) throw ConfigError(section + "." + key, "expected a number, got " + v->dump());
      dst = v->get<double>();
    }
  }

  template <typename T>
  void integer(const std::string& section, const std::string& key, T& dst) {
    if (const auto* v = take(section, key)) {
      if (!v->is_number_integer()) throw ConfigError(section + "." + key, "expected an integer, got " + v->dump());
      if constexpr (std::is_unsigned_v<T>) {
        if (v->is_number_unsigned()) {
          dst = static_cast<T>(v->get<std::uint64_t>());
          return;
        }
        throw ConfigError(section + "." + key, "must be >= 0, got " + v->dump());
      } else {
        const std::int64_t x = v->is_number_unsigned() && v->get<std::uint64_t>() >
                                                               static_cast<std::uint64_t>(std::numeric_limits<T>::max())
                                   ? std::numeric_limits<std::int64_t>::max()
                                   : v->get<std::int64_t>();
        if (x > std::numeric_limits<T>::max() || x < std::numeric_limits<T>::min()) {
          throw ConfigError(section + "." + key, "out of range: " + v->dump());
        }
        dst = static_cast<T>(x);
      }
    }
  }

  void boolean(const std::string& section, const std::string& key, bool& dst) {
    if (const auto* v = take(section, key)) {
      if (!v->is_boolean()) throw ConfigError(section + "." + key, "expected true or false, got " + v->dump());
      dst = v->get<bool>();
    }
  }

  void text(const std::string& section, const std::string& key, std::string& dst) {
    if (const auto* v = take(section, key)) {
      if (v->is_string()) dst = v->get<std::string>();
      else if (v->is_number()) dst = v->dump();
      else throw ConfigError(section + "." + key, "expected a string, got " + v->dump());
    }
  }

  void path(const std::string& section, const std::string& key, std::optional<std::filesystem::path>& dst) {
    std::string value = dst ? dst->string() : std::string();
    text(section, key, value);
    if (value.empty()) dst.reset();
    else dst = value;
  }

  void strings(const std::string& section, const std::string& key, std::vector<std::string>& dst) {
    if (const auto* v = take(section, key)) {
      if (v->is_string()) {
        dst = {v->get<std::string>()};
        return;
      }
      if (!v->is_array()) throw ConfigError(section + "." + key, "expected an array of strings");
      dst.clear();
      for (const auto& item : *v) {
        if (!item.is_string()) throw ConfigError(section + "." + key, "expected an array of strings");
        dst.push_back(item.get<std::string>());
      }
    }
  }

  void reject_leftovers() const {
    for (const auto& [section, keys] : doc_) {
      const bool known = std::find(kSections.begin(), kSections.end(), section) != kSections.end();
      if (!known) throw ConfigError(section, "unknown section");
      if (!keys.empty()) throw ConfigError(section + "." + keys.begin()->first, "unknown key");
    }
  }

 private:
  ConfigDoc doc_;
  nlohmann::json taken_;
};

void read_backend(Reader& r, const std::string& section, BackendConfig& b) {
  r.text(section, "base_url", b.base_url);
  r.text(section, "model", b.model_name);
  r.text(section, "api_key_env", b.api_key_env);
  r.integer(section, "timeout_ms", b.timeout_ms);
  r.integer(section, "max_retries", b.max_retries);
  r.integer(section, "backoff_base_ms", b.backoff_base_ms);
  r.integer(section, "backoff_jitter_ms", b.backoff_jitter_ms);
  r.integer(section, "max_in_flight", b.max_in_flight);
  r.integer(section, "requests_per_minute", b.requests_per_minute);
  b.validate(section);
}

void write_backend(std::map<std::string, nlohmann::json>& s, const BackendConfig& b) {
  s["base_url"] = b.base_url;
  s["model"] = b.model_name;
  s["api_key_env"] = b.api_key_env;
  s["timeout_ms"] = b.timeout_ms;
  s["max_retries"] = b.max_retries;
  s["backoff_base_ms"] = b.backoff_base_ms;
  s["backoff_jitter_ms"] = b.backoff_jitter_ms;
  s["max_in_flight"] = b.max_in_flight;
  s["requests_per_minute"] = b.requests_per_minute;
}

void check_range(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

nlohmann::json parse_value(std::string_view literal) {
  const std::string_view t = trim(literal);
  std::size_t pos = 0;
  if (auto v = parse_literal(t, pos); v && pos == t.size()) return *v;
  return nlohmann::json(std::string(t));
}

ConfigDoc parse_config_text(std::string_view text, const std::string& origin) {
  ConfigDoc doc;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int number = 0;
  auto fail = [&](const std::string& message) { throw ConfigError(fmt::format("{}:{}", origin, number), message); };
  while (std::getline(in, raw)) {
    ++number;
    std::string_view line = raw;
    if (const std::size_t c = comment_start(line); c != std::string_view::npos) line = line.substr(0, c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!is_key(name)) fail("bad section name '" + std::string(name) + "'");
      section = std::string(name);
      doc[section];  // an empty section still exists
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (!is_key(key)) fail("bad key '" + key + "'");
    if (section.empty()) fail("key '" + key + "' outside any [section]");
    const std::string_view value_text = trim(line.substr(eq + 1));
    std::size_t pos = 0;
    auto value = parse_literal(value_text, pos);
    if (!value || pos != value_text.size()) fail("bad value for '" + key + "': " + std::string(value_text));
    if (!doc[section].emplace(key, std::move(*value)).second) fail("duplicate key '" + key + "'");
  }
  return doc;
}

ConfigDoc read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.string());
}

void overlay(ConfigDoc& base, const ConfigDoc& top) {
  for (const auto& [section, keys] : top) {
    auto& dst = base[section];
    for (const auto& [key, value] : keys) dst[key] = value;
  }
}

ConfigDoc environment_layer() {
  ConfigDoc doc;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry = *e;
    constexpr std::string_view kPrefix = "SIBTREE_";
    if (entry.substr(0, kPrefix.size()) != kPrefix) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string_view name = entry.substr(kPrefix.size(), eq - kPrefix.size());
    for (const char* section : kSections) {
      std::string upper = section;
      for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      upper += '_';
      if (name.substr(0, upper.size()) != upper || name.size() == upper.size()) continue;
      std::string key(name.substr(upper.size()));
      for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      doc[section][key] = parse_value(entry.substr(eq + 1));
    }
  }
  return doc;
}

CliConfig::CliConfig() {
  // Step sampling needs token log-probs, which a self-hosted server exposes;
  // critique and revision default to a hosted chat model.
  generation.base_url = "http://localhost:8000/v1";
  generation.model_name = "Qwen2.5-Math-7B-Instruct";
}

CliConfig resolve(const ConfigDoc& doc) {
  CliConfig c;
  Reader r(doc);

  SearchConfig& s = c.search;
  r.integer("search", "num_simulations", s.num_simulations);
  r.real("search", "c_p", s.c_p);
  r.integer("search", "branching_n", s.branching_n);
  r.integer("search", "best_of_k", s.best_of_k);
  r.integer("search", "d_max", s.d_max);
  r.real("search", "temperature", s.temperature);
  r.integer("search", "max_step_tokens", s.max_step_tokens);
  std::string mode = to_string(s.expansion_mode);
  r.text("search", "expansion_mode", mode);
  try {
    s.expansion_mode = parse_expansion_mode(mode);
  } catch (const std::exception& e) {
    throw ConfigError("search.expansion_mode", e.what());
  }
  mode = to_string(s.path_mode);
  r.text("search", "path_mode", mode);
  try {
    s.path_mode = parse_path_mode(mode);
  } catch (const std::exception& e) {
    throw ConfigError("search.path_mode", e.what());
  }
  r.strings("search", "answer_markers", s.answer_markers);
  s.validate();

  read_backend(r, "generation", c.generation);
  read_backend(r, "critique", c.critique);
  r.real("critique", "temperature", c.model.critique_temperature);
  r.integer("critique", "max_tokens", c.model.critique_max_tokens);
  r.real("critique", "revise_temperature", c.model.revise_temperature);
  r.integer("critique", "revise_max_tokens", c.model.revise_max_tokens);
  r.integer("critique", "blackbox_max_tokens", c.model.blackbox_max_tokens);
  check_range(c.model.critique_temperature >= 0 && c.model.critique_temperature <= 2, "critique.temperature",
              "must be in [0, 2]");
  check_range(c.model.revise_temperature >= 0 && c.model.revise_temperature <= 2, "critique.revise_temperature",
              "must be in [0, 2]");
  check_range(c.model.critique_max_tokens >= 1, "critique.max_tokens", "must be >= 1");
  check_range(c.model.revise_max_tokens >= 1, "critique.revise_max_tokens", "must be >= 1");
  check_range(c.model.blackbox_max_tokens >= 1, "critique.blackbox_max_tokens", "must be >= 1");

  PipelineSettings& p = c.pipeline;
  r.integer("pipeline", "seed", p.seed);
  r.integer("pipeline", "workers", p.workers);
  r.integer("pipeline", "max_siblings", p.max_siblings);
  r.boolean("pipeline", "sequential_context", p.sequential_context);
  r.real("pipeline", "blackbox_temperature", p.blackbox_temperature);
  r.path("pipeline", "checkpoint_dir", p.checkpoint_dir);
  r.path("pipeline", "call_log", p.call_log);
  r.path("pipeline", "templates_dir", p.templates_dir);
  check_range(p.workers >= 1 && p.workers <= 256, "pipeline.workers", "must be in [1, 256]");
  check_range(p.max_siblings <= 16, "pipeline.max_siblings", "must be <= 16");
  check_range(p.blackbox_temperature >= 0 && p.blackbox_temperature <= 2, "pipeline.blackbox_temperature",
              "must be in [0, 2]");

  MockSettings& m = c.mock;
  r.boolean("mock", "enabled", m.enabled);
  r.path("mock", "script", m.script);
  r.integer("mock", "seed", m.seed);
  r.real("mock", "correct_rate", m.correct_rate);
  r.integer("mock", "max_steps", m.max_steps);
  check_range(m.correct_rate >= 0 && m.correct_rate <= 1, "mock.correct_rate", "must be in [0, 1]");
  check_range(m.max_steps >= 1, "mock.max_steps", "must be >= 1");

  r.boolean("reward", "numeric_compare", c.reward.numeric_compare);
  r.real("reward", "relative_tolerance", c.reward.relative_tolerance);
  check_range(c.reward.relative_tolerance >= 0, "reward.relative_tolerance", "must be >= 0");
  std::string kind = "binary";
  r.text("reward", "kind", kind);
  check_range(kind == "binary", "reward.kind", "only \"binary\" is supported");

  r.reject_leftovers();
  return c;
}

ConfigDoc CliConfig::to_doc() const {
  ConfigDoc doc;
  auto& s = doc["search"];
  s["num_simulations"] = search.num_simulations;
  s["c_p"] = search.c_p;
  s["branching_n"] = search.branching_n;
  s["best_of_k"] = search.best_of_k;
  s["d_max"] = search.d_max;
  s["temperature"] = search.temperature;
  s["max_step_tokens"] = search.max_step_tokens;
  s["expansion_mode"] = to_string(search.expansion_mode);
  s["path_mode"] = to_string(search.path_mode);
  s["answer_markers"] = search.answer_markers;

  write_backend(doc["generation"], generation);
  auto& cr = doc["critique"];
  write_backend(cr, critique);
  cr["temperature"] = model.critique_temperature;
  cr["max_tokens"] = model.critique_max_tokens;
  cr["revise_temperature"] = model.revise_temperature;
  cr["revise_max_tokens"] = model.revise_max_tokens;
  cr["blackbox_max_tokens"] = model.blackbox_max_tokens;

  auto& p = doc["pipeline"];
  p["seed"] = pipeline.seed;
  p["workers"] = pipeline.workers;
  p["max_siblings"] = pipeline.max_siblings;
  p["sequential_context"] = pipeline.sequential_context;
  p["blackbox_temperature"] = pipeline.blackbox_temperature;
  p["checkpoint_dir"] = pipeline.checkpoint_dir ? pipeline.checkpoint_dir->string() : "";
  p["call_log"] = pipeline.call_log ? pipeline.call_log->string() : "";
  p["templates_dir"] = pipeline.templates_dir ? pipeline.templates_dir->string() : "";

  auto& m = doc["mock"];
  m["enabled"] = mock.enabled;
  m["script"] = mock.script ? mock.script->string() : "";
  m["seed"] = mock.seed;
  m["correct_rate"] = mock.correct_rate;
  m["max_steps"] = mock.max_steps;

  auto& rw = doc["reward"];
  rw["kind"] = "binary";
  rw["numeric_compare"] = reward.numeric_compare;
  rw["relative_tolerance"] = reward.relative_tolerance;
  return doc;
}

std::string render_config(const ConfigDoc& doc) {
  std::string out;
  // Fixed section order so the output diffs cleanly.
  for (const char* section : kSections) {
    auto it = doc.find(section);
    if (it == doc.end()) continue;
    if (!out.empty()) out += '\n';
    out += fmt::format("[{}]\n", section);
    for (const auto& [key, value] : it->second) out += fmt::format("{} = {}\n", key, render_value(value));
  }
  return out;
}

}  // namespace sibtree::cli
