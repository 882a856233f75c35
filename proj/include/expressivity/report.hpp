#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "expressivity/errors.hpp"
#include "expressivity/ingest.hpp"
#include "expressivity/sweep.hpp"

namespace expressivity {

inline constexpr const char* kSweepCsvColumns[] = {"layer", "epoch",       "modality", "attribute",
                                                   "mean_nats", "std_nats", "runs",     "n",
                                                   "m",     "fingerprint", "status"};

struct ReportFormats {
  bool csv = true;
  bool json = true;
  bool svg = true;
};

inline std::string sweep_csv(const SweepResult& result) {
  std::string out;
  for (std::size_t i = 0; i < std::size(kSweepCsvColumns); ++i) {
    out += (i ? "," : "");
    out += kSweepCsvColumns[i];
  }
  out += '\n';
  for (const SweepRow& row : result.rows) {
    const bool ok = row.ok();
    const std::vector<std::string> fields{
        row.tags.layer,
        row.tags.epoch,
        row.tags.modality,
        row.tags.attribute,
        ok ? format_real(row.result->mean) : "",
        ok ? format_real(row.result->std_dev) : "",
        ok ? std::to_string(row.result->per_run.size()) : "0",
        std::to_string(row.n),
        std::to_string(row.m),
        row.fingerprint,
        row.status()};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      out += (i ? "," : "");
      out += detail::quote_csv_field(fields[i]);
    }
    out += '\n';
  }
  return out;
}

/// Per-row detail plus per-cell rankings. `with_timestamps` is off for
/// output that must be reproducible byte for byte.
inline nlohmann::json sweep_json(const SweepResult& result, bool with_timestamps = true) {
  nlohmann::json j;
  j["tool_version"] = result.tool_version;
  if (with_timestamps) {
    j["started"] = result.started;
    j["finished"] = result.finished;
  }
  j["seed"] = result.seed;
  j["fingerprint"] = result.fingerprint;
  j["units"] = "nats";
  j["rows"] = nlohmann::json::array();
  // Cells in row order, which is already natural tag order.
  std::vector<std::pair<std::tuple<std::string, std::string, std::string>, std::vector<ExpressivityResult>>> cells;
  for (const SweepRow& row : result.rows) {
    nlohmann::json r{{"layer", row.tags.layer},       {"epoch", row.tags.epoch},
                     {"modality", row.tags.modality}, {"attribute", row.tags.attribute},
                     {"status", row.status()},        {"reference", row.reference},
                     {"n", row.n},                    {"m", row.m},
                     {"fingerprint", row.fingerprint}};
    if (row.ok()) {
      r["mean_nats"] = row.result->mean;
      r["std_nats"] = row.result->std_dev;
      r["per_run"] = row.result->per_run;
      if (!row.reference) {
        const auto key = std::tuple{row.tags.layer, row.tags.epoch, row.tags.modality};
        auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return c.first == key; });
        if (it == cells.end()) it = cells.insert(cells.end(), {key, {}});
        it->second.push_back(*row.result);
      }
    } else {
      r["error"] = {{"code", row.failure_code}, {"reason", row.failure_reason}};
    }
    j["rows"].push_back(std::move(r));
  }
  j["rankings"] = nlohmann::json::array();
  for (const auto& [key, results] : cells) {
    if (results.size() < 2) continue;
    const auto ranked = rank_attributes(results);
    nlohmann::json order = nlohmann::json::array();
    for (const auto& a : ranked) {
      order.push_back({{"attribute", a.name}, {"mean_nats", a.mean}, {"tied_with_next", a.tied_with_next}});
    }
    j["rankings"].push_back({{"layer", std::get<0>(key)},
                             {"epoch", std::get<1>(key)},
                             {"modality", std::get<2>(key)},
                             {"summary", format_ranking(ranked)},
                             {"order", std::move(order)}});
  }
  return j;
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string file_safe(const std::string& s) {
  std::string out;
  for (const char c : s) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '.';
    out += keep ? c : '_';
  }
  return out.empty() ? "_" : out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const std::string& tag_on(const CellTags& t, int axis) {
  return axis == 0 ? t.layer : (axis == 1 ? t.epoch : t.modality);
}

inline constexpr const char* kAxisNames[] = {"layer", "epoch", "modality"};
inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace detail

struct SvgPlot {
  std::string filename;
  std::string svg;
};

/// Line plots of mean expressivity along the first grid axis that varies
/// (layer, then epoch, then modality), one polyline and one +/-1 std band per
/// attribute. One plot per combination of the remaining tags.
inline std::vector<SvgPlot> sweep_plots(const SweepResult& result) {
  std::vector<const SweepRow*> ok;
  for (const auto& r : result.rows) {
    if (r.ok()) ok.push_back(&r);
  }
  if (ok.empty()) return {};
  int axis = 0;
  for (int a = 0; a < 3; ++a) {
    std::set<std::string> values;
    for (const auto* r : ok) values.insert(detail::tag_on(r->tags, a));
    if (values.size() > 1) {
      axis = a;
      break;
    }
  }
  const int other1 = axis == 0 ? 1 : 0;
  const int other2 = axis == 2 ? 1 : 2;

  std::map<std::pair<std::string, std::string>, std::vector<const SweepRow*>> groups;
  for (const auto* r : ok) groups[{detail::tag_on(r->tags, other1), detail::tag_on(r->tags, other2)}].push_back(r);

  std::vector<SvgPlot> plots;
  for (const auto& [key, rows] : groups) {
    std::vector<std::string> xs;
    std::vector<std::string> attrs;
    for (const auto* r : rows) {
      xs.push_back(detail::tag_on(r->tags, axis));
      attrs.push_back(r->tags.attribute);
    }
    auto natural_unique = [](std::vector<std::string>& v) {
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return natural_compare(a, b) < 0; });
      v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    natural_unique(xs);
    natural_unique(attrs);

    double lo = 0.0, hi = 0.0;
    for (const auto* r : rows) {
      lo = std::min(lo, r->result->mean - r->result->std_dev);
      hi = std::max(hi, r->result->mean + r->result->std_dev);
    }
    if (hi - lo < 1e-9) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const double width = 720, height = 420, left = 70, right = 170, top = 40, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](std::size_t i) { return left + (xs.size() == 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(xs.size() - 1)); };
    auto py = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

    std::string title = std::string("expressivity by ") + detail::kAxisNames[axis];
    std::string suffix;
    for (const auto& [name, value] : {std::pair{detail::kAxisNames[other1], key.first},
                                      std::pair{detail::kAxisNames[other2], key.second}}) {
      if (value.empty()) continue;
      title += std::string(", ") + name + " " + value;
      suffix += "_" + detail::file_safe(value);
    }

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(width) + "\" height=\"" +
         detail::num(height) + "\" viewBox=\"0 0 " + detail::num(width) + " " + detail::num(height) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + detail::num(left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" +
         detail::svg_escape(title) + "</text>\n";
    // Axes, ticks and gridlines.
    s += "<line x1=\"" + detail::num(left) + "\" y1=\"" + detail::num(top + ph) + "\" x2=\"" + detail::num(left + pw) +
         "\" y2=\"" + detail::num(top + ph) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + detail::num(left) + "\" y1=\"" + detail::num(top) + "\" x2=\"" + detail::num(left) +
         "\" y2=\"" + detail::num(top + ph) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
      const double v = lo + (hi - lo) * t / 5.0;
      s += "<line x1=\"" + detail::num(left) + "\" y1=\"" + detail::num(py(v)) + "\" x2=\"" + detail::num(left + pw) +
           "\" y2=\"" + detail::num(py(v)) + "\" stroke=\"#dddddd\"/>\n";
      s += "<text x=\"" + detail::num(left - 8) + "\" y=\"" + detail::num(py(v) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + detail::num(v) + "</text>\n";
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
      s += "<text x=\"" + detail::num(px(i)) + "\" y=\"" + detail::num(top + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + detail::svg_escape(xs[i]) +
           "</text>\n";
    }
    s += "<text x=\"" + detail::num(left + pw / 2) + "\" y=\"" + detail::num(height - 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + detail::kAxisNames[axis] +
         "</text>\n";
    s += "<text transform=\"translate(18," + detail::num(top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">expressivity (nats)</text>\n";

    for (std::size_t a = 0; a < attrs.size(); ++a) {
      const char* color = detail::kPalette[a % std::size(detail::kPalette)];
      std::vector<std::pair<double, const ExpressivityResult*>> points;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        for (const auto* r : rows) {
          if (r->tags.attribute == attrs[a] && detail::tag_on(r->tags, axis) == xs[i]) {
            points.emplace_back(px(i), &*r->result);
          }
        }
      }
      std::string upper, lower, line;
      for (const auto& [x, res] : points) {
        upper += detail::num(x) + "," + detail::num(py(res->mean + res->std_dev)) + " ";
        line += detail::num(x) + "," + detail::num(py(res->mean)) + " ";
      }
      for (auto it = points.rbegin(); it != points.rend(); ++it) {
        lower += detail::num(it->first) + "," + detail::num(py(it->second->mean - it->second->std_dev)) + " ";
      }
      s += "<polygon class=\"band\" points=\"" + upper + lower + "\" fill=\"" + color +
           "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
      s += "<polyline class=\"mean\" points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
      const double ly = top + 14 + 18 * static_cast<double>(a);
      s += "<line x1=\"" + detail::num(left + pw + 16) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" +
           detail::num(left + pw + 40) + "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + detail::num(left + pw + 46) + "\" y=\"" + detail::num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + detail::svg_escape(attrs[a]) + "</text>\n";
    }
    s += "</svg>\n";

    std::string attrset;
    for (const auto& a : attrs) attrset += (attrset.empty() ? "" : "-") + detail::file_safe(a);
    plots.push_back({std::string(detail::kAxisNames[axis]) + "_" + attrset + suffix + ".svg", std::move(s)});
  }
  return plots;
}

/// Writes <out>/sweep.csv, <out>/sweep.json and <out>/plots/*.svg.
/// Returns the paths written.
inline std::vector<fs::path> emit_report(const SweepResult& result, const fs::path& out_dir,
                                         ReportFormats formats = {}) {
  if (result.rows.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to report: sweep has no rows");
  std::vector<fs::path> written;
  try {
    fs::create_directories(out_dir);
    if (formats.csv) {
      detail::write_atomically(out_dir / "sweep.csv", sweep_csv(result));
      written.push_back(out_dir / "sweep.csv");
    }
    if (formats.json) {
      detail::write_atomically(out_dir / "sweep.json", sweep_json(result).dump(2) + "\n");
      written.push_back(out_dir / "sweep.json");
    }
    if (formats.svg) {
      fs::create_directories(out_dir / "plots");
      for (const auto& plot : sweep_plots(result)) {
        detail::write_atomically(out_dir / "plots" / plot.filename, plot.svg);
        written.push_back(out_dir / "plots" / plot.filename);
      }
    }
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::IoError, e.what());
  }
  return written;
}

}  // namespace expressivity
