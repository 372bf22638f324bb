#pragma once

/**
 * @file metrics_io.hpp
 * @brief On-disk formats: metrics.jsonl, CSV plot exports, and artifacts.
 *
 * metrics.jsonl carries one record per training step. Lines are
 * self-contained JSON objects with a fixed key order and floats printed with
 * 17 significant digits, so two runs with the same config and seed produce
 * byte-identical files. Wall-clock timings are measured, not reproducible,
 * and therefore live in a separate timings.csv.
 *
 * CSV exports are plain tables with a header row, meant for direct ingestion
 * by any plotting tool.
 */

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tampo/envs.hpp"
#include "tampo/format.hpp"
#include "tampo/policy.hpp"
#include "tampo/trainer.hpp"

namespace tampo::io {

namespace detail {

inline std::string join_g17(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ",";
    out += format::g17(values[i]);
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

}  // namespace detail

// ============================================================================
// metrics.jsonl
// ============================================================================

/// One JSONL line (no trailing newline). Key order is fixed; wall_ms is
/// deliberately not serialized here.
inline std::string metrics_line(const trainer::MetricsRecord& record) {
  std::string line = "{";
  line += "\"step\":" + std::to_string(record.step);
  line += ",\"sampled_T\":" + format::g17(record.sampled_T);
  line += ",\"meta_dist\":[" + detail::join_g17(record.meta_dist) + "]";
  line += ",\"ema_adv\":[" + detail::join_g17(record.ema_adv) + "]";
  line += ",\"mean_reward\":" + format::g17(record.mean_reward);
  line += ",\"advantage_mean\":" + format::g17(record.advantage_mean);
  line += ",\"advantage_std\":" + format::g17(record.advantage_std);
  line += ",\"fraction_zero_variance_groups\":" +
          format::g17(record.fraction_zero_variance_groups);
  line += ",\"generation_counter\":" + std::to_string(record.generation_counter);
  line += "}";
  return line;
}

/// Append-per-step metrics writer (crash keeps completed lines).
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
  }

  void append(const trainer::MetricsRecord& record) {
    out_ << metrics_line(record) << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

/// Parse error pointing at the offending line.
struct MetricsParseError : std::runtime_error {
  int line;
  MetricsParseError(int at_line, const std::string& what)
      : std::runtime_error("metrics line " + std::to_string(at_line) + ": " + what),
        line(at_line) {}
};

inline std::vector<trainer::MetricsRecord> read_metrics_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<trainer::MetricsRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw MetricsParseError(line_no, "not valid JSON");
    try {
      trainer::MetricsRecord record;
      record.step = j.at("step").get<int>();
      record.sampled_T = j.at("sampled_T").get<double>();
      record.meta_dist = j.at("meta_dist").get<std::vector<double>>();
      record.ema_adv = j.at("ema_adv").get<std::vector<double>>();
      record.mean_reward = j.at("mean_reward").get<double>();
      record.advantage_mean = j.at("advantage_mean").get<double>();
      record.advantage_std = j.at("advantage_std").get<double>();
      record.fraction_zero_variance_groups =
          j.at("fraction_zero_variance_groups").get<double>();
      record.generation_counter = j.at("generation_counter").get<std::uint64_t>();
      records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      throw MetricsParseError(line_no, e.what());
    }
  }
  return records;
}

// ============================================================================
// Artifacts
// ============================================================================

inline void write_params(const std::filesystem::path& path, const policy::PolicyParams& params) {
  std::string body = "{";
  body += "\"vocab_size\":" + std::to_string(params.vocab_size);
  body += ",\"max_len\":" + std::to_string(params.max_len);
  body += ",\"num_tables\":" + std::to_string(params.num_tables);
  body += ",\"values\":[" + detail::join_g17(params.values) + "]";
  body += "}\n";
  detail::write_file(path, body);
}

inline policy::PolicyParams read_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open params artifact '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("params artifact '" + path.string() + "': " + e.what());
  }
  policy::PolicyParams params = policy::PolicyParams::zeros(
      j.at("vocab_size").get<int>(), j.at("max_len").get<int>(), j.at("num_tables").get<int>());
  const auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != params.values.size())
    throw std::runtime_error("params artifact '" + path.string() + "': value count mismatch");
  params.values = values;
  return params;
}

inline std::string eval_report_json(const envs::EvalReport& report) {
  std::string body = "{";
  body += "\"k\":" + std::to_string(report.k);
  body += ",\"pass_at_1\":" + format::g17(report.pass_at_1);
  body += ",\"pass_at_k\":" + format::g17(report.pass_at_k);
  if (report.k == 8) body += ",\"pass_at_8\":" + format::g17(report.pass_at_k);
  body += ",\"per_prompt\":[";
  for (std::size_t i = 0; i < report.per_prompt.size(); ++i) {
    const auto& p = report.per_prompt[i];
    if (i > 0) body += ",";
    body += "{\"prompt_id\":" + std::to_string(p.prompt_id) +
            ",\"successes\":" + std::to_string(p.successes) +
            ",\"attempts\":" + std::to_string(p.attempts) + "}";
  }
  body += "]}";
  return body;
}

inline void write_eval_report(const std::filesystem::path& path, const envs::EvalReport& report) {
  detail::write_file(path, eval_report_json(report) + "\n");
}

// ============================================================================
// Diagnostic sidecars
// ============================================================================

/// Raw per-trajectory samples for the T*-by-advantage diagnostic.
inline void write_tstar_samples(const std::filesystem::path& path,
                                std::span<const trainer::TstarSample> samples) {
  std::string body = "step,advantage,tstar\n";
  for (const trainer::TstarSample& s : samples) {
    body += std::to_string(s.step) + "," + format::g17(s.advantage) + "," +
            format::g17(s.tstar) + "\n";
  }
  detail::write_file(path, body);
}

inline std::vector<trainer::TstarSample> read_tstar_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<trainer::TstarSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;  // header
    trainer::TstarSample s;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &s.step, &s.advantage, &s.tstar) != 3)
      throw std::runtime_error("tstar samples line " + std::to_string(line_no) + ": malformed");
    samples.push_back(s);
  }
  return samples;
}

inline void write_timings(const std::filesystem::path& path,
                          std::span<const trainer::MetricsRecord> records) {
  std::string body = "step,wall_ms\n";
  for (const auto& r : records) body += std::to_string(r.step) + "," + format::g17(r.wall_ms) + "\n";
  detail::write_file(path, body);
}

// ============================================================================
// CSV plot exports
// ============================================================================

namespace detail {

/// Trailing sliding window over [0, i], truncated at the start.
inline trainer::detail::MeanStd sliding(std::span<const double> xs, std::size_t i,
                                        int window) {
  const std::size_t begin = (static_cast<int>(i) + 1 >= window) ? i + 1 - window : 0;
  return trainer::detail::mean_std(xs.subspan(begin, i - begin + 1));
}

}  // namespace detail

/// step, sampled_T, sliding mean/std of sampled_T over `window` steps.
inline void export_temperature_csv(std::span<const trainer::MetricsRecord> records, int window,
                                   const std::filesystem::path& path) {
  if (window < 1) throw std::invalid_argument("export_temperature_csv: window must be >= 1");
  std::vector<double> temps;
  temps.reserve(records.size());
  for (const auto& r : records) temps.push_back(r.sampled_T);
  std::string body = "step,sampled_T,sliding_mean,sliding_std\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto stats = detail::sliding(temps, i, window);
    body += std::to_string(records[i].step) + "," + format::g17(temps[i]) + "," +
            format::g17(stats.mean) + "," + format::g17(stats.std) + "\n";
  }
  detail::write_file(path, body);
}

/// step, mean_reward.
inline void export_reward_csv(std::span<const trainer::MetricsRecord> records,
                              const std::filesystem::path& path) {
  std::string body = "step,mean_reward\n";
  for (const auto& r : records)
    body += std::to_string(r.step) + "," + format::g17(r.mean_reward) + "\n";
  detail::write_file(path, body);
}

/// Heatmap table: step, then one meta-distribution column per grid index.
inline void export_meta_dist_csv(std::span<const trainer::MetricsRecord> records,
                                 const std::filesystem::path& path) {
  if (records.empty()) throw std::invalid_argument("export_meta_dist_csv: no records");
  const std::size_t k = records.front().meta_dist.size();
  std::string body = "step";
  for (std::size_t i = 1; i <= k; ++i) body += ",dist_" + std::to_string(i);
  body += "\n";
  for (const auto& r : records) {
    body += std::to_string(r.step);
    for (double p : r.meta_dist) body += "," + format::g17(p);
    body += "\n";
  }
  detail::write_file(path, body);
}

/// Windowed T*-by-advantage table.
inline void export_tstar_windows_csv(std::span<const trainer::TstarWindow> windows,
                                     const std::filesystem::path& path) {
  std::string body =
      "first_step,last_step,positive_count,positive_mean,positive_std,positive_median,"
      "negative_count,negative_mean,negative_std,negative_median\n";
  for (const auto& w : windows) {
    body += std::to_string(w.first_step) + "," + std::to_string(w.last_step) + "," +
            std::to_string(w.positive_count) + "," + format::g17(w.positive_mean) + "," +
            format::g17(w.positive_std) + "," + format::g17(w.positive_median) + "," +
            std::to_string(w.negative_count) + "," + format::g17(w.negative_mean) + "," +
            format::g17(w.negative_std) + "," + format::g17(w.negative_median) + "\n";
  }
  detail::write_file(path, body);
}

}  // namespace tampo::io
