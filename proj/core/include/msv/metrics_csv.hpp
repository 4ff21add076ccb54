#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace msv {

/// One CSV line. `cls` is a class index as text, or "mean" for the average
/// over foreground classes.
struct MetricsRow {
  std::uint64_t step = 0;
  std::string split;
  std::string cls;
  double dice = 0;
  double loss_main = 0;
  double loss_aux_sum = 0;
  double loss_total = 0;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "step,split,class,dice,loss_main,loss_aux_sum,loss_total";

/// Shortest round-trip form with a '.' decimal, always containing '.' or
/// an exponent ("1.0", "0.25", "1e-07").
std::string format_real(double v);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows);
/// Throws FormatError on a header or field mismatch.
std::vector<MetricsRow> parse_metrics_csv(std::istream& in);

}  // namespace msv
