#pragma once

// Report writers: CSV tables and ledgers, log-log SVG plots, JSON summaries.
// Every file starts with a header naming the artifact version and the hash
// of the resolved configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "viscoflow/convergence_lab.hpp"
#include "viscoflow/error.hpp"
#include "viscoflow/nonlinear_flow.hpp"

namespace viscoflow {

inline constexpr const char* kVersion = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Identifies the producing version and configuration of an output file.
struct Provenance {
  std::string config_hash = "0000000000000000";

  std::string line() const { return std::string("viscoflow ") + kVersion + " config_hash=" + config_hash; }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

inline std::string table_csv(const Table& t, const Provenance& prov) {
  std::string s = "# " + prov.line() + "\n" + t.row_label;
  for (const auto& c : t.cols) s += "," + c;
  s += "\n";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s += t.rows[r];
    for (double v : t.cells[r]) s += "," + format_number(v);
    s += "\n";
  }
  return s;
}

inline std::string ledger_csv(const std::vector<LedgerEntry>& ledger, const Provenance& prov) {
  std::string s = "# " + prov.line() + "\nn,t,energy,distance,rate,slope,iters,detmin\n";
  for (const auto& e : ledger)
    s += std::to_string(e.n) + "," + format_number(e.t) + "," + format_number(e.energy) + "," +
         format_number(e.distance) + "," + format_number(e.rate) + "," + format_number(e.slope) + "," +
         std::to_string(e.iters) + "," + format_number(e.detmin) + "\n";
  return s;
}

/// Parses a table written by table_csv (comment lines are skipped).
inline Table read_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    return f;
  };
  Table t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto f = split(line);
    if (!header) {
      if (f.size() < 2) throw Error("'" + path + "': header row needs at least two columns");
      t.row_label = f[0];
      t.cols.assign(f.begin() + 1, f.end());
      header = true;
      continue;
    }
    if (f.size() != t.cols.size() + 1) throw Error("'" + path + "': ragged row '" + line + "'");
    t.rows.push_back(f[0]);
    std::vector<double> v;
    for (std::size_t k = 1; k < f.size(); ++k) v.push_back(std::strtod(f[k].c_str(), nullptr));
    t.cells.push_back(std::move(v));
  }
  if (!header) throw Error("'" + path + "': no header row");
  const auto slash = path.find_last_of('/');
  t.name = path.substr(slash == std::string::npos ? 0 : slash + 1);
  if (t.name.size() > 4 && t.name.ends_with(".csv")) t.name.resize(t.name.size() - 4);
  return t;
}

// ---------------------------------------------------------------------------
// SVG

struct Series {
  std::string label;
  std::vector<double> x, y;
};

/// Leading number of a row label such as "0.02" or "0.02:0.05".
inline double label_value(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

/// One series per column, plotted against the numeric row labels.
inline std::vector<Series> table_series(const Table& t, const std::string& prefix = "") {
  std::vector<Series> out;
  for (std::size_t c = 0; c < t.cols.size(); ++c) {
    Series s;
    s.label = prefix + t.cols[c];
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      s.x.push_back(label_value(t.rows[r]));
      s.y.push_back(t.cells[r][c]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// One series per row, plotted against the numeric column labels.
inline std::vector<Series> table_row_series(const Table& t, const std::string& prefix = "") {
  std::vector<Series> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Series s;
    s.label = prefix + t.rows[r];
    for (std::size_t c = 0; c < t.cols.size(); ++c) {
      s.x.push_back(label_value(t.cols[c]));
      s.y.push_back(t.cells[r][c]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}

/// Log-log line plot; non-positive or non-finite points are skipped.
inline std::string loglog_svg(const std::vector<Series>& series, const std::string& title,
                              const std::string& xlabel, const std::string& ylabel, const Provenance& prov) {
  constexpr double W = 640, H = 440, L = 80, R = 200, Tm = 40, B = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  for (const auto& s : series)
    for (std::size_t k = 0; k < s.x.size(); ++k)
      if (ok(s.x[k]) && ok(s.y[k])) {
        x0 = std::fmin(x0, std::log10(s.x[k]));
        x1 = std::fmax(x1, std::log10(s.x[k]));
        y0 = std::fmin(y0, std::log10(s.y[k]));
        y1 = std::fmax(y1, std::log10(s.y[k]));
      }
  const bool empty = !std::isfinite(x0);
  if (empty) x0 = y0 = 0, x1 = y1 = 1;
  x0 = std::floor(x0), x1 = std::ceil(x1), y0 = std::floor(y0), y1 = std::ceil(y1);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double lx) { return L + (lx - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double ly) { return H - B - (ly - y0) / (y1 - y0) * (H - Tm - B); };
  char buf[256];
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- " + prov.line() + " -->\n";
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                W, H);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">", (L + W - R) / 2);
  s += buf + svg_escape(title) + "</text>\n";
  for (double d = x0; d <= x1 + 1e-9; d += 1) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">1e%.0f</text>\n",
                  px(d), Tm, px(d), H - B, px(d), H - B + 18, d);
    s += buf;
  }
  for (double d = y0; d <= y1 + 1e-9; d += 1) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">1e%.0f</text>\n",
                  L, py(d), W - R, py(d), L - 6, py(d) + 4, d);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                L, Tm, W - L - R, H - Tm - B);
  s += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">", (L + W - R) / 2, H - 16);
  s += buf + svg_escape(xlabel) + "</text>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">",
                (Tm + H - B) / 2, (Tm + H - B) / 2);
  s += buf + svg_escape(ylabel) + "</text>\n";
  if (empty) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">no positive data</text>\n",
                  (L + W - R) / 2, (Tm + H - B) / 2);
    s += buf;
  }
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* col = palette[k % 10];
    std::string pts;
    for (std::size_t j = 0; j < series[k].x.size(); ++j)
      if (ok(series[k].x[j]) && ok(series[k].y[j])) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(std::log10(series[k].x[j])), py(std::log10(series[k].y[j])));
        pts += buf;
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                      px(std::log10(series[k].x[j])), py(std::log10(series[k].y[j])), col);
        s += buf;
      }
    if (!pts.empty()) {
      pts.pop_back();
      s += "<polyline fill=\"none\" stroke=\"" + std::string(col) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    }
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>",
                  W - R + 12, Tm + 10 + 18.0 * k, W - R + 32, Tm + 10 + 18.0 * k, col);
    s += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\">", W - R + 38, Tm + 14 + 18.0 * k);
    s += buf + svg_escape(series[k].label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// The series drawn for each report kind.
inline std::vector<Series> report_series(const SweepReport& r, std::string& xlabel, std::string& ylabel) {
  std::vector<Series> out;
  auto append = [&](std::vector<Series> v) { out.insert(out.end(), v.begin(), v.end()); };
  if (r.kind == "sweep-delta") {
    xlabel = "delta", ylabel = "H1 error";
    for (const Table& t : r.tables)
      if (t.name.starts_with("errors_")) append(table_series(t, t.name.substr(7) + " tau="));
  } else if (r.kind == "sweep-tau") {
    xlabel = "tau", ylabel = "energy identity residual";
    append(table_row_series(r.table("residual"), "delta="));
  } else if (r.kind == "diagonal") {
    xlabel = "delta (tau for tau limbs)", ylabel = "H1 error";
    for (const char* name : {"limb_delta", "limb_tau_linear", "limb_tau_nonlinear"})
      append(table_series(r.table(name), std::string(name) + " t="));
    const Table& d = r.table("diagonal");
    for (std::size_t c = 0; c < d.cols.size(); c += 3) {
      Series s;
      s.label = d.cols[c];
      for (std::size_t k = 0; k < d.rows.size(); ++k) {
        s.x.push_back(label_value(d.rows[k]));
        s.y.push_back(d.cells[k][c]);
      }
      out.push_back(std::move(s));
    }
  } else if (r.kind == "audit") {
    xlabel = "delta", ylabel = "convexity violations";
    const Table& e = r.table("escalation");
    Series s;
    s.label = "violations";
    for (std::size_t k = 0; k < e.rows.size(); ++k) {
      s.x.push_back(label_value(e.rows[k]));
      s.y.push_back(e.cells[k][2]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

inline nlohmann::ordered_json report_json(const SweepReport& r, const Provenance& prov) {
  nlohmann::ordered_json j;
  j["artifact"] = "viscoflow";
  j["version"] = kVersion;
  j["config_hash"] = prov.config_hash;
  j["kind"] = r.kind;
  j["passed"] = r.passed();
  auto& checks = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"advisory", c.advisory}, {"detail", c.detail}});
  auto& metrics = j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = json_number(v);
  j["flagged"] = r.flagged;
  auto& tables = j["tables"] = nlohmann::ordered_json::array();
  for (const auto& t : r.tables) tables.push_back(t.name + ".csv");
  return j;
}

/// Writes one CSV per table, report.svg and summary.json into dir.
inline void write_report(const std::string& dir, const SweepReport& r, const Provenance& prov) {
  for (const Table& t : r.tables) write_text(dir + "/" + t.name + ".csv", table_csv(t, prov));
  std::string xl, yl;
  const auto series = report_series(r, xl, yl);
  write_text(dir + "/report.svg", loglog_svg(series, r.kind, xl, yl, prov));
  write_text(dir + "/summary.json", report_json(r, prov).dump(2) + "\n");
}

}  // namespace viscoflow
