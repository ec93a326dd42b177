// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/grading.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <regex>

namespace sibtree {
namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  return text;
}

void replace_all(std::string& text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// Contents of the brace group opening right after `open` (which points one
// past '{'). Returns npos-length on unbalanced input.
std::optional<std::string> brace_group(std::string_view text, std::size_t open) {
  int depth = 1;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return std::string(text.substr(open, i - open));
  }
  return std::nullopt;
}

// Inner text of the last "\boxed{...}" / "\fbox{...}" group.
std::optional<std::string> last_boxed(std::string_view text) {
  std::optional<std::string> found;
  for (std::string_view wrapper : {std::string_view("\\boxed{"), std::string_view("\\fbox{")}) {
    std::size_t pos = text.rfind(wrapper);
    if (pos == std::string_view::npos) continue;
    if (auto inner = brace_group(text, pos + wrapper.size())) {
      if (!found) found = inner;
    }
  }
  return found;
}

std::optional<double> parse_plain_number(std::string text) {
  static const std::regex kThousands(R"(^-?\d{1,3}(,\d{3})+(\.\d+)?$)");
  if (std::regex_match(text, kThousands)) text.erase(std::remove(text.begin(), text.end(), ','), text.end());
  static const std::regex kDecimal(R"(^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$)");
  if (!std::regex_match(text, kDecimal)) return std::nullopt;
  return std::strtod(text.c_str(), nullptr);
}

}  // namespace

std::string normalize_answer(std::string_view input) {
  std::string text(trim(input));
  // Unwrap nested wrappers until nothing changes.
  for (int guard = 0; guard < 8; ++guard) {
    const std::string before = text;
    if (auto boxed = last_boxed(text)) text = *boxed;
    std::string low = lower(text);
    const std::string_view phrase = "the answer is";
    if (auto pos = low.rfind(phrase); pos != std::string::npos) {
      text = text.substr(pos + phrase.size());
    }
    std::string_view t = trim(text);
    if (!t.empty() && t.front() == ':') t.remove_prefix(1);
    t = trim(t);
    while (t.size() >= 2 && t.front() == '$' && t.back() == '$') t = trim(t.substr(1, t.size() - 2));
    while (!t.empty() && (t.back() == '.' || t.back() == '$')) t = trim(t.substr(0, t.size() - 1));
    while (!t.empty() && t.front() == '$') t = trim(t.substr(1));
    text = std::string(t);
    if (text == before) break;
  }
  replace_all(text, "\\dfrac", "\\frac");
  replace_all(text, "\\tfrac", "\\frac");
  replace_all(text, "\\left", "");
  replace_all(text, "\\right", "");
  replace_all(text, "\\!", "");

  std::string collapsed;
  bool in_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !collapsed.empty()) collapsed.push_back(' ');
    in_space = false;
    collapsed.push_back(c);
  }
  return collapsed;
}

std::optional<double> parse_rational(std::string_view normalized) {
  std::string text(trim(normalized));
  if (text.empty()) return std::nullopt;
  if (auto plain = parse_plain_number(text)) return plain;

  static const std::regex kFrac(R"(^([+-]?)\\frac\{\s*([^{}]+?)\s*\}\{\s*([^{}]+?)\s*\}$)");
  static const std::regex kSlash(R"(^([+-]?)\s*([^/\s]+)\s*/\s*([^/\s]+)$)");
  std::smatch m;
  if (std::regex_match(text, m, kFrac) || std::regex_match(text, m, kSlash)) {
    auto num = parse_plain_number(m[2].str());
    auto den = parse_plain_number(m[3].str());
    if (!num || !den || *den == 0.0) return std::nullopt;
    const double value = *num / *den;
    return m[1].str() == "-" ? -value : value;
  }
  return std::nullopt;
}

int grade_answer(std::string_view candidate, std::string_view reference, const RewardSpec& spec) {
  const std::string a = normalize_answer(candidate);
  const std::string b = normalize_answer(reference);
  if (a.empty()) return 0;
  if (spec.numeric_compare) {
    const auto x = parse_rational(a);
    const auto y = parse_rational(b);
    if (x && y) {
      if (*x == *y) return 1;
      const double scale = std::max(std::fabs(*x), std::fabs(*y));
      return std::fabs(*x - *y) <= spec.relative_tolerance * scale ? 1 : 0;
    }
  }
  return a == b ? 1 : 0;
}

bool has_answer_marker(std::string_view step, std::span<const std::string> markers) {
  const std::string low = lower(step);
  return std::any_of(markers.begin(), markers.end(), [&](const std::string& marker) {
    return low.find(lower(marker)) != std::string::npos;
  });
}

std::optional<std::string> extract_final_answer(std::string_view step,
                                                std::span<const std::string> markers) {
  const std::string low = lower(step);
  // Brace-style markers ("\boxed{") take precedence over phrases.
  for (const auto& marker : markers) {
    if (marker.empty() || marker.back() != '{') continue;
    const std::size_t pos = low.rfind(lower(marker));
    if (pos == std::string::npos) continue;
    if (auto inner = brace_group(step, pos + marker.size())) {
      std::string answer(trim(*inner));
      if (!answer.empty()) return answer;
    }
  }
  for (const auto& marker : markers) {
    if (marker.empty() || marker.back() == '{') continue;
    const std::size_t pos = low.rfind(lower(marker));
    if (pos == std::string::npos) continue;
    std::string_view rest = step.substr(pos + marker.size());
    rest = rest.substr(0, rest.find('\n'));
    rest = trim(rest);
    if (!rest.empty() && rest.front() == ':') rest = trim(rest.substr(1));
    while (!rest.empty() && rest.back() == '.') rest = trim(rest.substr(0, rest.size() - 1));
    if (!rest.empty()) return std::string(rest);
  }
  return std::nullopt;
}

}  // namespace sibtree
