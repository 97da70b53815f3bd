#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "fsc/training.hpp"

namespace fsc {

/// Shortest decimal text that round-trips the value.
inline std::string fmt_num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

inline void write_text_file(const std::string& path, const std::string& body) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::IoError, "cannot write " + path);
  os << body;
  if (!os) fail(Errc::IoError, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// metrics report serialization (values x1000, matching the table convention)

inline nlohmann::ordered_json report_to_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  auto agg = [](const EvalAggregate& a) {
    nlohmann::ordered_json r;
    r["category"] = a.category.empty() ? "all" : a.category;
    r["resolution"] = a.resolution;
    r["count"] = a.count;
    r["cd_l1_x1000"] = a.cd_l1 * 1000.0;
    r["cd_l2_x1000"] = a.cd_l2 * 1000.0;
    r["emd_x1000"] = a.emd * 1000.0;
    return r;
  };
  j["overall"] = nlohmann::ordered_json::array();
  for (const auto& a : rep.overall) j["overall"].push_back(agg(a));
  j["per_category"] = nlohmann::ordered_json::array();
  for (const auto& a : rep.per_category) j["per_category"].push_back(agg(a));
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : rep.records) {
    nlohmann::ordered_json e;
    e["id"] = r.id;
    e["category"] = r.category;
    e["resolution"] = r.resolution;
    e["ok"] = r.ok;
    if (r.ok) {
      e["cd_l1_x1000"] = r.cd_l1 * 1000.0;
      e["cd_l2_x1000"] = r.cd_l2 * 1000.0;
      e["emd_x1000"] = r.emd * 1000.0;
    } else {
      e["error"] = r.error;
    }
    j["records"].push_back(std::move(e));
  }
  j["failures"] = rep.failures;
  return j;
}

inline std::string report_to_csv(const MetricsReport& rep) {
  std::string s = "scope,category,resolution,count,cd_l1_x1000,cd_l2_x1000,emd_x1000\n";
  auto row = [&](const char* scope, const EvalAggregate& a) {
    s += scope;
    s += ',';
    s += a.category.empty() ? "all" : a.category;
    s += ',' + std::to_string(a.resolution) + ',' + std::to_string(a.count) + ',' +
         fmt_num(a.cd_l1 * 1000.0) + ',' + fmt_num(a.cd_l2 * 1000.0) + ',' +
         fmt_num(a.emd * 1000.0) + '\n';
  };
  for (const auto& a : rep.overall) row("overall", a);
  for (const auto& a : rep.per_category) row("category", a);
  return s;
}

// ---------------------------------------------------------------------------
// minimal SVG line charts

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct ChartSpec {
  std::string title, xlabel, ylabel;
  bool log_x = false;
  std::vector<ChartSeries> series;
};

namespace reportdetail {

inline const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

}  // namespace reportdetail

/// Hand-rolled single-plot SVG: axes, ticks, legend, one polyline per series.
inline std::string render_line_chart(const ChartSpec& spec) {
  require(!spec.series.empty(), Errc::InvalidArgument, "chart: no series");
  const double W = 640, H = 420, L = 72, R = 620, T = 34, B = 368;
  double xmin = std::numeric_limits<double>::max(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : spec.series)
    for (const auto& [x, y] : s.points) {
      const double xv = spec.log_x ? std::log2(x) : x;
      xmin = std::min(xmin, xv);
      xmax = std::max(xmax, xv);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  require(std::isfinite(xmin) && std::isfinite(ymax), Errc::InvalidArgument, "chart: empty series");
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) {
    const double xv = spec.log_x ? std::log2(x) : x;
    return L + (xv - xmin) / (xmax - xmin) * (R - L);
  };
  auto py = [&](double y) { return B - (y - ymin) / (ymax - ymin) * (B - T); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + fmt_fixed(W, 0) + " " +
       fmt_fixed(H, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"" + fmt_fixed(W, 0) + "\" height=\"" + fmt_fixed(H, 0) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt_fixed((L + R) / 2, 1) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" +
       reportdetail::svg_escape(spec.title) + "</text>\n";

  const int kTicks = 5;
  for (int t = 0; t <= kTicks; ++t) {
    const double fx = xmin + (xmax - xmin) * t / kTicks;
    const double x = spec.log_x ? std::exp2(fx) : fx;
    const double gx = L + (R - L) * t / kTicks;
    s += "<line x1=\"" + fmt_fixed(gx, 1) + "\" y1=\"" + fmt_fixed(T, 1) + "\" x2=\"" +
         fmt_fixed(gx, 1) + "\" y2=\"" + fmt_fixed(B, 1) + "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + fmt_fixed(gx, 1) + "\" y=\"" + fmt_fixed(B + 16, 1) +
         "\" text-anchor=\"middle\">" + fmt_fixed(x, spec.log_x ? 0 : 2) + "</text>\n";
    const double fy = ymin + (ymax - ymin) * t / kTicks;
    const double gy = B - (B - T) * t / kTicks;
    s += "<line x1=\"" + fmt_fixed(L, 1) + "\" y1=\"" + fmt_fixed(gy, 1) + "\" x2=\"" +
         fmt_fixed(R, 1) + "\" y2=\"" + fmt_fixed(gy, 1) + "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + fmt_fixed(L - 6, 1) + "\" y=\"" + fmt_fixed(gy + 4, 1) +
         "\" text-anchor=\"end\">" + fmt_fixed(fy, 2) + "</text>\n";
  }
  s += "<line x1=\"" + fmt_fixed(L, 1) + "\" y1=\"" + fmt_fixed(B, 1) + "\" x2=\"" +
       fmt_fixed(R, 1) + "\" y2=\"" + fmt_fixed(B, 1) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt_fixed(L, 1) + "\" y1=\"" + fmt_fixed(T, 1) + "\" x2=\"" +
       fmt_fixed(L, 1) + "\" y2=\"" + fmt_fixed(B, 1) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + fmt_fixed((L + R) / 2, 1) + "\" y=\"" + fmt_fixed(H - 12, 1) +
       "\" text-anchor=\"middle\">" + reportdetail::svg_escape(spec.xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt_fixed((T + B) / 2, 1) +
       "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + fmt_fixed((T + B) / 2, 1) +
       ")\">" + reportdetail::svg_escape(spec.ylabel) + "</text>\n";

  for (size_t k = 0; k < spec.series.size(); ++k) {
    const auto& ser = spec.series[k];
    const char* color = reportdetail::kPalette[k % 6];
    std::string pts;
    for (const auto& [x, y] : ser.points) {
      if (!pts.empty()) pts += ' ';
      pts += fmt_fixed(px(x), 2) + "," + fmt_fixed(py(y), 2);
    }
    s += "<polyline fill=\"none\" stroke=\"";
    s += color;
    s += "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = T + 14 + 16 * static_cast<double>(k);
    s += "<line x1=\"" + fmt_fixed(R - 130, 1) + "\" y1=\"" + fmt_fixed(ly - 4, 1) + "\" x2=\"" +
         fmt_fixed(R - 110, 1) + "\" y2=\"" + fmt_fixed(ly - 4, 1) + "\" stroke=\"";
    s += color;
    s += "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt_fixed(R - 104, 1) + "\" y=\"" + fmt_fixed(ly, 1) + "\">" +
         reportdetail::svg_escape(ser.name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace fsc
