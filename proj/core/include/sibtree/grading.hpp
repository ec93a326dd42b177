// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sibtree {

/// Terminal reward definition. Only binary correctness exists; the options
/// tune how answers are normalized before comparison.
struct RewardSpec {
  enum class Kind { binary_correctness };
  Kind kind = Kind::binary_correctness;
  bool numeric_compare = true;
  double relative_tolerance = 1e-9;
};

/// Trim, unwrap boxed markers and "The answer is", drop math-mode dollars and
/// a trailing period, collapse internal whitespace.
std::string normalize_answer(std::string_view text);

/// Parses integers, decimals, "a/b" and "\frac{a}{b}" (after normalization).
std::optional<double> parse_rational(std::string_view normalized);

/// 1 iff the normalized candidate equals the normalized reference, numerically
/// when both parse as numbers. Always exactly 0 or 1.
int grade_answer(std::string_view candidate, std::string_view reference, const RewardSpec& spec);

/// True when `step` contains any of the markers (case-insensitive).
bool has_answer_marker(std::string_view step, std::span<const std::string> markers);

/// The final answer stated in `step`: the contents of the last boxed marker if
/// there is one, otherwise the text after the last phrase marker on that line.
std::optional<std::string> extract_final_answer(std::string_view step,
                                                std::span<const std::string> markers);

}  // namespace sibtree
