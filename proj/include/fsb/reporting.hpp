#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fsb/classifier.hpp"
#include "fsb/ensembles.hpp"
#include "fsb/error.hpp"

namespace fsb {

inline constexpr std::string_view kReportCsvHeader =
    "dataset,method,ways,shots,mean,ci95,episodes,seed,config_fingerprint";

struct BenchmarkRow {
  std::string dataset;
  std::string method;
  std::size_t ways = 0;
  std::size_t shots = 0;
  double mean = 0.0;
  double ci95 = 0.0;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  std::string config_fingerprint;

  bool operator==(const BenchmarkRow&) const = default;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
};

/// Shortest round-trip decimal form, independent of the C locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, decimals);
  return {buf, res.ptr};
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable 16-hex-digit hash of every TrainConfig field and the method.
inline std::string config_fingerprint(const TrainConfig& c, const MethodSpec& method) {
  std::string canon = "lr=" + format_double(c.learning_rate) + ";epochs=" + std::to_string(c.epochs) +
                      ";hidden=" + std::to_string(c.hidden_size) + ";l2=" + format_double(c.l2_lambda) +
                      ";beta1=" + format_double(c.adam_beta1) + ";beta2=" + format_double(c.adam_beta2) +
                      ";eps=" + format_double(c.adam_eps) + ";seed=" + std::to_string(c.seed) +
                      ";method=" + method.name();
  static constexpr char digits[] = "0123456789abcdef";
  auto h = fnv1a64(canon);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xF];
  return out;
}

namespace detail {

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) fail(Errc::ParseError, "unterminated quote");
  return fields;
}

template <typename T>
T parse_number(const std::string& s) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(Errc::ParseError, "bad number '" + s + "'");
  return value;
}

inline void check_row(const BenchmarkRow& r) {
  if (!(r.mean >= 0.0 && r.mean <= 1.0)) fail(Errc::InvalidSpec, "mean outside [0, 1] in " + r.dataset);
  if (!(r.ci95 >= 0.0) || !std::isfinite(r.ci95)) fail(Errc::InvalidSpec, "negative ci95 in " + r.dataset);
}

}  // namespace detail

inline std::string emit_csv(const BenchmarkReport& report) {
  if (report.rows.empty()) fail(Errc::EmptyReport, "report has no rows");
  std::string out(kReportCsvHeader);
  out += '\n';
  for (const auto& r : report.rows) {
    detail::check_row(r);
    out += detail::csv_field(r.dataset) + ',' + detail::csv_field(r.method) + ',' + std::to_string(r.ways) + ',' +
           std::to_string(r.shots) + ',' + format_double(r.mean) + ',' + format_double(r.ci95) + ',' +
           std::to_string(r.episodes) + ',' + std::to_string(r.seed) + ',' + r.config_fingerprint + '\n';
  }
  return out;
}

/// Accuracy cells are "mean ± ci" in percent with one decimal.
inline std::string format_accuracy_cell(double mean, double ci95) {
  return format_fixed(mean * 100.0, 1) + " \xC2\xB1 " + format_fixed(ci95 * 100.0, 1);
}

inline std::string emit_markdown(const BenchmarkReport& report) {
  if (report.rows.empty()) fail(Errc::EmptyReport, "report has no rows");
  std::string out =
      "| dataset | method | ways | shots | accuracy (%) | episodes | seed | config |\n"
      "|---|---|---:|---:|---:|---:|---:|---|\n";
  for (const auto& r : report.rows) {
    detail::check_row(r);
    out += "| " + r.dataset + " | " + r.method + " | " + std::to_string(r.ways) + " | " + std::to_string(r.shots) +
           " | " + format_accuracy_cell(r.mean, r.ci95) + " | " + std::to_string(r.episodes) + " | " +
           std::to_string(r.seed) + " | " + r.config_fingerprint + " |\n";
  }
  return out;
}

enum class ReportFormat { Csv, Markdown };

inline std::string emit(const BenchmarkReport& report, ReportFormat format) {
  return format == ReportFormat::Csv ? emit_csv(report) : emit_markdown(report);
}

inline BenchmarkReport parse_csv(std::string_view text) {
  BenchmarkReport report;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != kReportCsvHeader) fail(Errc::ParseError, "unexpected CSV header");
      header = false;
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 9) fail(Errc::ParseError, "expected 9 fields, got " + std::to_string(f.size()));
    BenchmarkRow r;
    r.dataset = f[0];
    r.method = f[1];
    r.ways = detail::parse_number<std::size_t>(f[2]);
    r.shots = detail::parse_number<std::size_t>(f[3]);
    r.mean = detail::parse_number<double>(f[4]);
    r.ci95 = detail::parse_number<double>(f[5]);
    r.episodes = detail::parse_number<std::size_t>(f[6]);
    r.seed = detail::parse_number<std::uint64_t>(f[7]);
    r.config_fingerprint = f[8];
    report.rows.push_back(std::move(r));
  }
  if (header) fail(Errc::ParseError, "missing CSV header");
  return report;
}

}  // namespace fsb
