// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <string>

namespace sibtree {

using ordered_json = nlohmann::ordered_json;

/// Compact serialization identical to ordered_json::dump() except that every
/// floating-point number is written with 17 significant digits ("%.17g").
/// Used for tree dumps, which must round-trip doubles bit-exactly.
std::string dump_json_17g(const ordered_json& value);

}  // namespace sibtree
