// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace sibtree {
namespace {

// Nearest-rank percentile over sorted values.
double percentile(const std::vector<std::size_t>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
  return static_cast<double>(sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1]);
}

std::string temperature_key(const ordered_json& meta) {
  if (!meta.contains("temperature") || !meta["temperature"].is_number()) return "unknown";
  return fmt::format("{:g}", meta["temperature"].get<double>());
}

}  // namespace

ordered_json StatsReport::to_json() const {
  ordered_json j;
  j["records"] = records;
  j["per_variant"] = per_variant;
  j["per_temperature"] = per_temperature;
  ordered_json depths = ordered_json::object();
  for (const auto& [d, n] : depth_histogram) depths[std::to_string(d)] = n;
  j["depth_histogram"] = std::move(depths);
  j["mean_siblings_per_depth"] = mean_siblings_per_depth;
  j["steps"] = {{"refined", refined_steps}, {"pass_through", pass_through_steps}, {"fallback", fallback_steps}};
  j["pass_through_rate"] = pass_through_rate;
  j["response_length_percentiles"] = response_length_percentiles;
  j["rollout_reward_rate"] = rollout_reward_rate ? ordered_json(*rollout_reward_rate) : ordered_json(nullptr);
  return j;
}

std::string StatsReport::to_text() const {
  std::string out = fmt::format("records: {}\n", records);
  for (const auto& [v, n] : per_variant) out += fmt::format("  variant {}: {}\n", v, n);
  for (const auto& [t, n] : per_temperature) out += fmt::format("  temperature {}: {}\n", t, n);
  if (!depth_histogram.empty()) {
    out += "path depth:\n";
    for (const auto& [d, n] : depth_histogram) out += fmt::format("  {:>3}: {}\n", d, n);
  }
  if (!mean_siblings_per_depth.empty()) {
    out += "mean siblings per depth:";
    for (double m : mean_siblings_per_depth) out += fmt::format(" {:.2f}", m);
    out += "\n";
  }
  const std::size_t steps = refined_steps + pass_through_steps + fallback_steps;
  if (steps > 0) {
    out += fmt::format("steps: {} refined, {} pass-through, {} fallback (pass-through rate {:.3f})\n", refined_steps,
                       pass_through_steps, fallback_steps, pass_through_rate);
  }
  if (records > 0) {
    out += fmt::format("response length (chars): p10 {:g}, p50 {:g}, p90 {:g}, max {:g}\n",
                       response_length_percentiles.at("p10"), response_length_percentiles.at("p50"),
                       response_length_percentiles.at("p90"), response_length_percentiles.at("max"));
  }
  if (rollout_reward_rate) out += fmt::format("rollout reward rate: {:.4f}\n", *rollout_reward_rate);
  return out;
}

StatsReport stats(const std::filesystem::path& dataset, const std::optional<std::filesystem::path>& manifest) {
  const std::vector<DatasetRecord> records = read_dataset(dataset);
  StatsReport report;
  report.records = records.size();

  std::vector<double> sibling_sums;
  std::vector<std::size_t> sibling_n;
  std::vector<std::size_t> lengths;
  for (const auto& r : records) {
    ++report.per_variant[to_string(r.variant)];
    ++report.per_temperature[temperature_key(r.metadata)];
    lengths.push_back(r.response.size());
    const ordered_json& meta = r.metadata;
    if (meta.contains("path_depth")) ++report.depth_histogram[meta["path_depth"].get<int>()];
    if (meta.contains("sibling_counts")) {
      const auto& counts = meta["sibling_counts"];
      for (std::size_t d = 0; d < counts.size(); ++d) {
        if (sibling_sums.size() <= d) {
          sibling_sums.resize(d + 1, 0.0);
          sibling_n.resize(d + 1, 0);
        }
        sibling_sums[d] += counts[d].get<double>();
        ++sibling_n[d];
      }
    }
    if (meta.contains("step_status")) {
      for (const auto& s : meta["step_status"]) {
        const std::string status = s.get<std::string>();
        if (status == "refined") ++report.refined_steps;
        else if (status == "pass-through") ++report.pass_through_steps;
        else ++report.fallback_steps;
      }
    }
  }
  for (std::size_t d = 0; d < sibling_sums.size(); ++d) {
    report.mean_siblings_per_depth.push_back(sibling_sums[d] / static_cast<double>(sibling_n[d]));
  }
  const std::size_t steps = report.refined_steps + report.pass_through_steps + report.fallback_steps;
  if (steps > 0) report.pass_through_rate = static_cast<double>(report.pass_through_steps) / static_cast<double>(steps);

  std::sort(lengths.begin(), lengths.end());
  report.response_length_percentiles = {{"p10", percentile(lengths, 10)},
                                        {"p50", percentile(lengths, 50)},
                                        {"p90", percentile(lengths, 90)},
                                        {"max", lengths.empty() ? 0.0 : static_cast<double>(lengths.back())}};

  if (manifest) {
    std::ifstream in(*manifest, std::ios::binary);
    if (!in) throw PipelineError(PipelineErrc::io_error, "cannot open " + manifest->string());
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.contains("rollout_reward_rate") && j["rollout_reward_rate"].is_number()) {
        report.rollout_reward_rate = j["rollout_reward_rate"].get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw PipelineError(PipelineErrc::parse_error, "bad manifest " + manifest->string() + ": " + e.what());
    }
  }
  return report;
}

}  // namespace sibtree
