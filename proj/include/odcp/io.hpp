#pragma once

// File formats: numeric CSV in, JSON-lines reports, JSON truth files, and
// atomic writes (temp file + rename).

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "odcp/datagen.hpp"
#include "odcp/detector.hpp"
#include "odcp/error.hpp"
#include "odcp/eval.hpp"
#include "odcp/transform.hpp"

namespace odcp::io {

using json = nlohmann::ordered_json;

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_number(std::string_view field, double& out) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  std::vector<std::vector<double>> rows;
};

/// Numeric CSV. The first line is taken as a header when any of its fields
/// is not a number. Errors name the 1-based line and column.
inline CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    std::vector<double> row(fields.size());
    std::size_t bad = 0;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!detail::parse_number(fields[j], row[j]) && bad == 0) bad = j + 1;
    }
    if (bad != 0) {
      if (table.rows.empty() && table.header.empty()) {
        for (auto f : fields) table.header.emplace_back(f);
        width = fields.size();
        continue;
      }
      throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(bad) +
                           ": '" + std::string(fields[bad - 1]) + "' is not a number",
                       line_no, bad);
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                           " columns, found " + std::to_string(fields.size()),
                       line_no, 0);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw ParseError("no data rows", line_no, 0);
  return table;
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

inline std::string to_csv(const std::vector<std::vector<double>>& rows,
                          const std::vector<std::string>& header = {}) {
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  if (!header.empty()) out += '\n';
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += format_double(row[j]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const ChangePointReport& r) {
  return json{{"global_index", r.global_index},
              {"z_star", r.z_star},
              {"p_value", r.p_value},
              {"window_span", {r.window_span.first, r.window_span.second}},
              {"left_alpha", r.left_params.alpha()},
              {"right_alpha", r.right_params.alpha()}};
}

inline json to_json(const TestRecord& t) {
  return json{{"window_begin", t.window_begin}, {"window_end", t.window_end},
              {"candidate", t.candidate},       {"z_star", t.z_star},
              {"p_value", t.p_value},           {"significant", t.significant}};
}

template <class T>
std::string to_json_lines(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) out += to_json(item).dump() + '\n';
  return out;
}

/// Detected indices from a JSON-lines report, sorted.
inline std::vector<std::size_t> read_detected(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).at("global_index").get<std::size_t>());
    } catch (const json::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what(),
                       line_no, 0);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Generator specs and truth files

inline json to_json(const DetectorConfig& c) {
  return json{{"initial_window", c.initial_window},
              {"batch", c.batch},
              {"replicates", c.replicates},
              {"alpha", c.alpha},
              {"min_segment", c.min_segment},
              {"mle_tol", c.mle_tol},
              {"mle_max_iter", c.mle_max_iter},
              {"fit_method", c.fit_method == FitMethod::newton ? "newton" : "fixed-point"},
              {"eps", c.eps},
              {"seed", c.seed},
              {"method", to_string(c.method)},
              {"early_stop", c.early_stop},
              {"threads", c.threads}};
}

inline json to_json(const SegmentSpec& s) {
  json j{{"length", s.length}, {"family", to_string(s.family())}};
  switch (s.family()) {
    case SegmentFamily::dirichlet:
      j["alpha"] = std::get<DirichletParams>(s.params).alpha();
      break;
    case SegmentFamily::dirichlet_mixture: {
      const auto& mix = std::get<DirichletMixture>(s.params);
      json comps = json::array();
      for (const auto& c : mix.components) comps.push_back(c.alpha());
      j["weights"] = mix.weights;
      j["components"] = comps;
      break;
    }
    case SegmentFamily::gaussian: {
      const auto& n = std::get<MvNormal>(s.params);
      j["mean"] = n.mean();
      j["covariance"] = n.covariance();
      break;
    }
  }
  return j;
}

inline json to_json(const GenSpec& spec) {
  json segs = json::array();
  for (const auto& s : spec.segments) segs.push_back(to_json(s));
  return json{{"seed", spec.seed},
              {"post_transform", to_string(spec.post_transform)},
              {"segments", segs}};
}

inline json to_json(const PresetRequest& r) {
  json j{{"name", r.name}, {"d", r.d}, {"sym_kl", r.sym_kl}, {"snr", to_string(r.snr)},
         {"mixture_perturbation", r.mixture_perturbation}, {"seed", r.seed}};
  j["seg_len"] = r.seg_len ? json(*r.seg_len) : json(nullptr);
  j["segments"] = r.segments ? json(*r.segments) : json(nullptr);
  j["change"] = r.change ? json(to_string(*r.change)) : json(nullptr);
  j["sparsity"] = r.sparsity ? json(*r.sparsity) : json(nullptr);
  j["noise"] = r.noise ? json(*r.noise) : json(nullptr);
  return j;
}

struct Truth {
  std::vector<std::size_t> change_points;
  std::size_t length = 0;
  std::size_t segment_length = 0;  // 0 when segments differ in length
};

inline json truth_json(const GenSpec& spec, const SegmentLabeling& labeling, std::size_t length) {
  std::size_t seg_len = spec.segments.front().length;
  for (const auto& s : spec.segments) {
    if (s.length != seg_len) seg_len = 0;
  }
  return json{{"change_points", labeling.change_points()},
              {"length", length},
              {"segment_length", seg_len},
              {"spec", to_json(spec)}};
}

inline Truth read_truth(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_file(path));
    Truth t;
    t.change_points = j.at("change_points").get<std::vector<std::size_t>>();
    t.length = j.value("length", std::size_t{0});
    t.segment_length = j.value("segment_length", std::size_t{0});
    std::sort(t.change_points.begin(), t.change_points.end());
    return t;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, 0);
  }
}

inline json to_json(const Standardization& s) {
  return json{{"mu", s.mu}, {"sigma", s.sigma}, {"guarded", s.guarded}};
}

inline Standardization read_standardization(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_file(path));
    Standardization s;
    s.mu = j.at("mu").get<std::vector<double>>();
    s.sigma = j.at("sigma").get<std::vector<double>>();
    if (s.mu.size() != s.sigma.size()) throw DimensionError("mu and sigma differ in length");
    for (double v : s.sigma) {
      if (!(v > 0.0)) throw DomainError("sigma must be positive");
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, 0);
  }
}

inline std::string eval_csv(const EvalResult& r) {
  std::string out = "tolerance_w,precision,recall,detected,truth,matched\n";
  out += std::to_string(r.tolerance_w) + ',' +
         (r.precision ? format_double(*r.precision) : std::string("null")) + ',' +
         format_double(r.recall) + ',' + std::to_string(r.detected_count) + ',' +
         std::to_string(r.truth_count) + ',' + std::to_string(r.matches.size()) + '\n';
  return out;
}

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "w,precision,recall\n";
  for (const auto& p : curve) {
    out += std::to_string(p.w) + ',' +
           (p.precision ? format_double(*p.precision) : std::string("null")) + ',' +
           format_double(p.recall) + '\n';
  }
  return out;
}

}  // namespace odcp::io
