#include "survsurrogate/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

namespace survsurrogate {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string where(std::size_t line_no, const std::string& col) {
  return "line " + std::to_string(line_no) + ", column " + col;
}

double parse_double(const std::string& f, std::size_t line_no, const std::string& col) {
  double v = 0.0;
  const char* end = f.data() + f.size();
  auto [p, ec] = std::from_chars(f.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) {
    throw CsvError(where(line_no, col) + ": not a finite number: '" + f + "'");
  }
  return v;
}

std::uint8_t parse_binary(const std::string& f, std::size_t line_no, const std::string& col) {
  if (f == "0") return 0;
  if (f == "1") return 1;
  throw CsvError(where(line_no, col) + ": expected 0 or 1, got '" + f + "'");
}

// Number of consecutive columns prefix1, prefix2, ... present in the header.
int count_series(const std::map<std::string, std::size_t>& cols, const std::string& prefix) {
  int n = 0;
  while (cols.count(prefix + std::to_string(n + 1))) ++n;
  return n;
}

}  // namespace

LongitudinalDataset read_wide_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError("empty input: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split(line);
  std::map<std::string, std::size_t> cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (!cols.emplace(header[j], j).second) throw CsvError("duplicate column '" + header[j] + "'");
  }
  for (const char* req : {"id", "g", "a1", "y1"}) {
    if (!cols.count(req)) throw CsvError(std::string("missing required column '") + req + "'");
  }
  const int p = count_series(cols, "x");
  const int t = count_series(cols, "a");
  const int t0 = count_series(cols, "s");
  for (int k = 1; k <= t; ++k) {
    if (!cols.count("y" + std::to_string(k))) {
      throw CsvError("missing required column 'y" + std::to_string(k) + "'");
    }
  }
  if (count_series(cols, "y") != t) throw CsvError("y columns do not match a columns");
  if (t0 > t) throw CsvError("more surrogate columns than time points");
  const std::size_t expected = 2 + static_cast<std::size_t>(p + 2 * t + t0);
  if (header.size() != expected) throw CsvError("unexpected extra columns in header");

  auto col = [&](const std::string& name) { return cols.at(name); };
  std::vector<std::size_t> xc, ac, yc, sc;
  for (int j = 1; j <= p; ++j) xc.push_back(col("x" + std::to_string(j)));
  for (int k = 1; k <= t; ++k) ac.push_back(col("a" + std::to_string(k)));
  for (int k = 1; k <= t; ++k) yc.push_back(col("y" + std::to_string(k)));
  for (int k = 1; k <= t0; ++k) sc.push_back(col("s" + std::to_string(k)));
  const std::size_t id_c = col("id"), g_c = col("g");

  std::vector<SubjectRecord> subjects;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw CsvError("line " + std::to_string(line_no) + ": expected " +
                     std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    SubjectRecord r;
    r.id = f[id_c];
    if (r.id.empty()) throw CsvError(where(line_no, "id") + ": empty id");
    for (int j = 0; j < p; ++j) {
      r.x.push_back(parse_double(f[xc[j]], line_no, header[xc[j]]));
    }
    r.g = parse_binary(f[g_c], line_no, "g");
    for (int k = 0; k < t; ++k) {
      const auto& fa = f[ac[k]];
      r.a.push_back(parse_binary(fa, line_no, header[ac[k]]));
      const auto& fy = f[yc[k]];
      r.y.push_back(fy.empty() ? std::nullopt
                               : std::optional<std::uint8_t>(parse_binary(fy, line_no, header[yc[k]])));
    }
    for (int k = 0; k < t0; ++k) {
      const auto& fs = f[sc[k]];
      r.s.push_back(fs.empty() ? std::nullopt
                               : std::optional<double>(parse_double(fs, line_no, header[sc[k]])));
    }
    subjects.push_back(std::move(r));
  }
  if (subjects.empty()) throw CsvError("no data rows");
  std::vector<std::string> names;
  for (int j = 1; j <= p; ++j) names.push_back("x" + std::to_string(j));
  return LongitudinalDataset(TimeGrid(t, t0), std::move(subjects), std::move(names));
}

LongitudinalDataset read_wide_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open '" + path + "'");
  return read_wide_csv(in);
}

void write_wide_csv(const LongitudinalDataset& data, std::ostream& out) {
  const int t = data.grid().t(), t0 = data.grid().t0();
  out << "id";
  for (std::size_t j = 1; j <= data.n_covariates(); ++j) out << ",x" << j;
  out << ",g";
  for (int k = 1; k <= t; ++k) out << ",a" << k;
  for (int k = 1; k <= t; ++k) out << ",y" << k;
  for (int k = 1; k <= t0; ++k) out << ",s" << k;
  out << '\n';
  for (const auto& s : data.subjects()) {
    out << s.id;
    for (double x : s.x) out << ',' << format_double(x);
    out << ',' << s.g;
    for (auto a : s.a) out << ',' << static_cast<int>(a);
    for (const auto& y : s.y) {
      out << ',';
      if (y) out << static_cast<int>(*y);
    }
    for (const auto& v : s.s) {
      out << ',';
      if (v) out << format_double(*v);
    }
    out << '\n';
  }
}

void write_wide_csv_file(const LongitudinalDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError("cannot write '" + path + "'");
  write_wide_csv(data, out);
  if (!out) throw CsvError("write failed for '" + path + "'");
}

}  // namespace survsurrogate
