// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sibtree {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// First eight bytes of SHA-256(data), big-endian. Stable across platforms and runs.
std::uint64_t stable_hash64(std::string_view data);

/// splitmix64-style combiner; used to derive child seeds from a parent seed.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

std::string hex16(std::uint64_t value);

}  // namespace sibtree
