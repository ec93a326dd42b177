// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/json_format.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace sibtree {
namespace {

void write(const ordered_json& value, std::string& out) {
  switch (value.type()) {
    case ordered_json::value_t::object: {
      out.push_back('{');
      bool first = true;
      for (const auto& [key, item] : value.items()) {
        if (!first) out.push_back(',');
        first = false;
        out += ordered_json(key).dump();
        out.push_back(':');
        write(item, out);
      }
      out.push_back('}');
      return;
    }
    case ordered_json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& item : value) {
        if (!first) out.push_back(',');
        first = false;
        write(item, out);
      }
      out.push_back(']');
      return;
    }
    case ordered_json::value_t::number_float: {
      const double number = value.get<double>();
      if (!std::isfinite(number)) throw std::invalid_argument("non-finite number in JSON output");
      std::string text = fmt::format("{:.17g}", number);
      // Keep floats recognisable as floats after a round trip.
      if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
      out += text;
      return;
    }
    default:
      out += value.dump();
  }
}

}  // namespace

std::string dump_json_17g(const ordered_json& value) {
  std::string out;
  write(value, out);
  return out;
}

}  // namespace sibtree
