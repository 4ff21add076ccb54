#include "msv/metrics_csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "msv/errors.hpp"

namespace msv {

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << r.split << ',' << r.cls << ',' << format_real(r.dice)
        << ',' << format_real(r.loss_main) << ',' << format_real(r.loss_aux_sum)
        << ',' << format_real(r.loss_total) << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_metrics_csv(out, rows);
}

namespace {

template <typename T>
T parse_field(const std::string& field, std::size_t line) {
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw FormatError("metrics csv line " + std::to_string(line) +
                      ": cannot parse '" + field + "'");
  }
  return v;
}

}  // namespace

std::vector<MetricsRow> parse_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError("metrics csv: unexpected header '" + line + "'");
  }
  std::vector<MetricsRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) {
      throw FormatError("metrics csv line " + std::to_string(n) + ": expected 7 fields");
    }
    MetricsRow r;
    r.step = parse_field<std::uint64_t>(f[0], n);
    r.split = f[1];
    r.cls = f[2];
    r.dice = parse_field<double>(f[3], n);
    r.loss_main = parse_field<double>(f[4], n);
    r.loss_aux_sum = parse_field<double>(f[5], n);
    r.loss_total = parse_field<double>(f[6], n);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace msv
