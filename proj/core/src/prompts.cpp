// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/prompts.hpp"

#include "sibtree/hashing.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>
#include <utility>

namespace sibtree {
namespace {

struct BuiltinTemplate {
  const char* name;
  const char* text;
};

constexpr BuiltinTemplate kBuiltinTemplates[] = {
#include "builtin_templates.inc"
};

enum class TokenKind { text, scalar, item, index, open, open_inverted, close };

struct Token {
  TokenKind kind;
  std::string value;  // literal text or tag name
};

struct Node {
  Token token;
  std::vector<Node> body;  // for sections
};

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) tokens.push_back({TokenKind::text, std::move(literal)});
    literal.clear();
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      literal.push_back('{');
      i += 2;
      continue;
    }
    if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      literal.push_back('}');
      i += 2;
      continue;
    }
    if (c != '{') {
      literal.push_back(c);
      ++i;
      continue;
    }
    const std::size_t end = text.find('}', i + 1);
    if (end == std::string_view::npos) {
      literal.push_back(c);
      ++i;
      continue;
    }
    std::string_view inner = text.substr(i + 1, end - i - 1);
    Token tag{TokenKind::scalar, {}};
    bool is_section = false;
    if (!inner.empty() && (inner[0] == '#' || inner[0] == '^' || inner[0] == '/')) {
      tag.kind = inner[0] == '#' ? TokenKind::open
                 : inner[0] == '^' ? TokenKind::open_inverted
                                   : TokenKind::close;
      inner.remove_prefix(1);
      is_section = true;
    } else if (inner.size() > 3 && inner.substr(inner.size() - 3) == "[*]") {
      tag.kind = TokenKind::item;
      inner.remove_suffix(3);
    } else if (inner.size() > 6 && inner.substr(inner.size() - 6) == ".index") {
      tag.kind = TokenKind::index;
      inner.remove_suffix(6);
    }
    if (!is_identifier(inner)) {
      // Not a placeholder (e.g. "\boxed{...}"): keep the brace literally.
      literal.push_back(c);
      ++i;
      continue;
    }
    tag.value = std::string(inner);
    std::size_t next = end + 1;
    if (is_section) {
      // A section tag alone on its line swallows the line.
      const std::size_t prev_nl = text.rfind('\n', i == 0 ? 0 : i - 1);
      const std::size_t line_start = (prev_nl == std::string_view::npos || prev_nl >= i) ? 0 : prev_nl + 1;
      const std::string_view lead = text.substr(line_start, i - line_start);
      const std::size_t eol = text.find('\n', next);
      const std::size_t line_end = eol == std::string_view::npos ? text.size() : eol;
      if (blank(lead) && blank(text.substr(next, line_end - next)) && literal.size() >= lead.size()) {
        literal.resize(literal.size() - lead.size());
        next = eol == std::string_view::npos ? text.size() : eol + 1;
      }
    }
    flush();
    tokens.push_back(std::move(tag));
    i = next;
  }
  flush();
  return tokens;
}

std::vector<Node> parse_nodes(const std::vector<Token>& tokens, std::size_t& pos, const std::string* open) {
  std::vector<Node> nodes;
  while (pos < tokens.size()) {
    const Token& t = tokens[pos++];
    if (t.kind == TokenKind::close) {
      if (!open || *open != t.value) throw TemplateError("unexpected {/" + t.value + "}");
      return nodes;
    }
    Node node{t, {}};
    if (t.kind == TokenKind::open || t.kind == TokenKind::open_inverted) {
      node.body = parse_nodes(tokens, pos, &t.value);
    }
    nodes.push_back(std::move(node));
  }
  if (open) throw TemplateError("unclosed section {#" + *open + "}");
  return nodes;
}

struct Frame {
  const std::string* list;
  const std::string* item;
  std::size_t index;
};

const std::vector<std::string>& list_of(const PromptVars& vars, const std::string& name) {
  auto it = vars.lists.find(name);
  if (it == vars.lists.end()) throw TemplateError("missing list variable '" + name + "'");
  return it->second;
}

const Frame& frame_of(const std::vector<Frame>& frames, const std::string& name) {
  for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
    if (*it->list == name) return *it;
  }
  throw TemplateError("{" + name + "[*]} used outside {#" + name + "}");
}

void render_nodes(const std::vector<Node>& nodes, const PromptVars& vars, std::vector<Frame>& frames,
                  std::string& out) {
  for (const Node& node : nodes) {
    switch (node.token.kind) {
      case TokenKind::text:
        out += node.token.value;
        break;
      case TokenKind::scalar: {
        auto it = vars.scalars.find(node.token.value);
        if (it == vars.scalars.end()) {
          throw TemplateError("missing variable '" + node.token.value + "'");
        }
        out += it->second;
        break;
      }
      case TokenKind::item:
        out += *frame_of(frames, node.token.value).item;
        break;
      case TokenKind::index:
        out += std::to_string(frame_of(frames, node.token.value).index);
        break;
      case TokenKind::open: {
        const auto& items = list_of(vars, node.token.value);
        for (std::size_t i = 0; i < items.size(); ++i) {
          frames.push_back({&node.token.value, &items[i], i + 1});
          render_nodes(node.body, vars, frames, out);
          frames.pop_back();
        }
        break;
      }
      case TokenKind::open_inverted:
        if (list_of(vars, node.token.value).empty()) render_nodes(node.body, vars, frames, out);
        break;
      case TokenKind::close:
        break;
    }
  }
}

std::string trim_trailing_newlines(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

}  // namespace

std::string render_template(std::string_view text, const PromptVars& vars) {
  const auto tokens = tokenize(text);
  std::size_t pos = 0;
  const auto nodes = parse_nodes(tokens, pos, nullptr);
  std::vector<Frame> frames;
  std::string out;
  render_nodes(nodes, vars, frames, out);
  return out;
}

PromptTemplate PromptTemplate::parse(std::string name, std::string_view file_text) {
  PromptTemplate tmpl;
  tmpl.name = std::move(name);
  tmpl.hash = sha256_hex(file_text);

  std::string* section = nullptr;
  bool saw_user = false;
  std::istringstream in{std::string(file_text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!section && line.rfind("## ", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos && line.substr(3, colon - 3) == "version") {
        std::string value = line.substr(colon + 1);
        value.erase(0, value.find_first_not_of(' '));
        tmpl.version = value;
      }
      continue;
    }
    if (line == "[system]") {
      section = &tmpl.system;
      continue;
    }
    if (line == "[user]") {
      section = &tmpl.user;
      saw_user = true;
      continue;
    }
    if (!section) {
      if (blank(line)) continue;
      throw TemplateError(tmpl.name + ": text before the first [system]/[user] section");
    }
    *section += line;
    *section += '\n';
  }
  if (!saw_user) throw TemplateError(tmpl.name + ": missing [user] section");
  if (tmpl.version.empty()) throw TemplateError(tmpl.name + ": missing '## version:' header");
  tmpl.system = trim_trailing_newlines(tmpl.system);
  tmpl.user = trim_trailing_newlines(tmpl.user);
  // Validate syntax eagerly so a broken file fails at load time.
  std::size_t pos = 0;
  (void)parse_nodes(tokenize(tmpl.system), pos, nullptr);
  pos = 0;
  (void)parse_nodes(tokenize(tmpl.user), pos, nullptr);
  return tmpl;
}

RenderedPrompt render(const PromptTemplate& tmpl, const PromptVars& vars) {
  RenderedPrompt prompt;
  prompt.system = render_template(tmpl.system, vars);
  prompt.user = render_template(tmpl.user, vars);
  prompt.hash = sha256_hex(prompt.system + "\n\x1e\n" + prompt.user);
  return prompt;
}

PromptTemplates PromptTemplates::builtin() {
  PromptTemplates set;
  for (const auto& entry : kBuiltinTemplates) {
    const std::string name = entry.name;
    PromptTemplate tmpl = PromptTemplate::parse(name, entry.text);
    if (name.rfind("step.", 0) == 0) set.step = std::move(tmpl);
    else if (name.rfind("critique.", 0) == 0) set.critique = std::move(tmpl);
    else if (name.rfind("revise.", 0) == 0) set.revise = std::move(tmpl);
    else if (name.rfind("blackbox.", 0) == 0) set.blackbox = std::move(tmpl);
  }
  return set;
}

PromptTemplates PromptTemplates::load_dir(const std::filesystem::path& dir) {
  static const std::regex kName(R"(^(step|critique|revise|blackbox)\.v(\d+)\.txt$)");
  std::map<std::string, std::pair<int, std::filesystem::path>> best;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (!std::regex_match(file, m, kName)) continue;
    const int version = std::stoi(m[2].str());
    auto& slot = best[m[1].str()];
    if (slot.second.empty() || version > slot.first) slot = {version, entry.path()};
  }
  if (ec) throw TemplateError("cannot read template directory " + dir.string() + ": " + ec.message());

  auto load = [&](const std::string& capability) {
    auto it = best.find(capability);
    if (it == best.end()) {
      throw TemplateError(fmt::format("no {}.v<N>.txt template in {}", capability, dir.string()));
    }
    std::ifstream in(it->second.second, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return PromptTemplate::parse(it->second.second.filename().string(), buffer.str());
  };
  PromptTemplates set;
  set.step = load("step");
  set.critique = load("critique");
  set.revise = load("revise");
  set.blackbox = load("blackbox");
  return set;
}

std::map<std::string, std::string> PromptTemplates::hashes() const {
  return {{step.name, step.hash},
          {critique.name, critique.hash},
          {revise.name, revise.hash},
          {blackbox.name, blackbox.hash}};
}

}  // namespace sibtree
