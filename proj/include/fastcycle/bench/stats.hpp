#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastcycle/clock.hpp"
#include "fastcycle/error.hpp"

namespace fastcycle::bench {

/// One timed message. In latency mode t_pub/t_recv are publication and
/// reception; in rtt mode they are the ping send and the echo reception.
struct Sample {
  std::uint64_t i = 0;
  Nanos t_pub = 0;
  Nanos t_recv = 0;

  Nanos duration_ns() const noexcept { return t_recv - t_pub; }

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct StatsSummary {
  std::size_t size_bytes = 0;
  std::size_t n_effective = 0;
  double mean_us = 0;
  double std_us = 0;  // population standard deviation, i.e. the jitter
  double min_us = 0;
  double max_us = 0;
  double p50_us = 0;
  double p99_us = 0;
};

/// Nearest-rank percentile index (0-based) for `percent` in (0, 100].
inline std::size_t nearest_rank_index(std::size_t n, unsigned percent) noexcept {
  const std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100;
  return std::clamp<std::size_t>(rank, 1, n) - 1;
}

/// Mean, population std, extremes and nearest-rank percentiles of
/// t_recv - t_pub, reported in microseconds. Throws TooFewSamples below 2.
inline StatsSummary compute_stats(std::span<const Sample> samples, std::size_t size_bytes = 0) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::too_few_samples,
                "need at least 2 samples, got " + std::to_string(samples.size()));
  }
  std::vector<double> us;
  us.reserve(samples.size());
  for (const auto& s : samples) us.push_back(static_cast<double>(s.duration_ns()) / 1000.0);

  // Welford's running update.
  double mean = 0.0;
  double m2 = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t k = 0;
  for (double x : us) {
    ++k;
    const double delta = x - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (x - mean);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }

  StatsSummary out;
  out.size_bytes = size_bytes;
  out.n_effective = us.size();
  out.mean_us = mean;
  out.std_us = std::sqrt(std::max(0.0, m2 / static_cast<double>(us.size())));
  out.min_us = lo;
  out.max_us = hi;

  auto pick = [&](unsigned percent) {
    auto nth = us.begin() + static_cast<std::ptrdiff_t>(nearest_rank_index(us.size(), percent));
    std::nth_element(us.begin(), nth, us.end());
    return *nth;
  };
  out.p50_us = pick(50);
  out.p99_us = pick(99);
  return out;
}

enum class ReportFormat { csv, table };

inline constexpr std::string_view kCsvHeader = "size_bytes,n,mean_us,std_us,min_us,max_us,p50_us,p99_us";

namespace detail {

// Shortest text that reads back to the same double.
inline std::string exact(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string size_label(std::size_t bytes) {
  if (bytes >= (1u << 20) && bytes % (1u << 20) == 0) return std::to_string(bytes >> 20) + "MB";
  if (bytes >= (1u << 10) && bytes % (1u << 10) == 0) return std::to_string(bytes >> 10) + "KB";
  return std::to_string(bytes) + "B";
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace detail

/// "<mean> ± <std>" with both rounded half away from zero to whole µs.
inline std::string mean_std_cell(const StatsSummary& s) {
  return std::to_string(std::llround(s.mean_us)) + " ± " + std::to_string(std::llround(s.std_us));
}

/// csv: header line plus one full-precision row per summary.
/// table: one row per size with a "<mean> ± <std>" cell in µs.
inline std::string render_report(std::span<const StatsSummary> summaries, ReportFormat format,
                                 std::string_view metric = "latency") {
  std::string out;
  if (format == ReportFormat::csv) {
    out.append(kCsvHeader).push_back('\n');
    for (const auto& s : summaries) {
      out += std::to_string(s.size_bytes) + "," + std::to_string(s.n_effective) + "," +
             detail::exact(s.mean_us) + "," + detail::exact(s.std_us) + "," + detail::exact(s.min_us) +
             "," + detail::exact(s.max_us) + "," + detail::exact(s.p50_us) + "," +
             detail::exact(s.p99_us) + "\n";
    }
    return out;
  }
  out += detail::pad("size", 8) + detail::pad("n", 8) + std::string(metric) + " mean ± std (us)\n";
  for (const auto& s : summaries) {
    out += detail::pad(detail::size_label(s.size_bytes), 8) +
           detail::pad(std::to_string(s.n_effective), 8) + mean_std_cell(s) + "\n";
  }
  return out;
}

}  // namespace fastcycle::bench
