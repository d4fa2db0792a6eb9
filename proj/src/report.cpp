#include "uscliplab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace usclip {

using nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void csv_row(std::ofstream& f, const std::string& model, const std::string& metric,
             const std::string& group, double value) {
  f << model << "," << metric << "," << group << "," << fmt(value) << "\n";
}

std::string frac_group(double fraction) { return "frac=" + fmt(fraction); }

void write_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write report CSV: " + path.string());
  f << "model,metric,group,value\n";
  for (const auto& r : reports) {
    csv_row(f, r.model_tag, "paired_alignment", "all", r.paired_alignment);
    csv_row(f, r.model_tag, "cross_alignment", "all", r.cross_alignment);
    csv_row(f, r.model_tag, "zero_shot_accuracy", "all", r.zero_shot_accuracy);
    for (const auto& g : r.zero_shot_by_organ.groups) {
      csv_row(f, r.model_tag, "zero_shot_accuracy", g.group, g.accuracy);
    }
    for (int k : r.retrieval.ks) {
      csv_row(f, r.model_tag, "recall_i2t@" + std::to_string(k), "all",
              r.retrieval.image_to_text.at(k));
      csv_row(f, r.model_tag, "recall_t2i@" + std::to_string(k), "all",
              r.retrieval.text_to_image.at(k));
    }
    csv_row(f, r.model_tag, "probe_auroc", "all", r.probe_auroc);
    csv_row(f, r.model_tag, "probe_accuracy", "all", r.probe_accuracy);
    for (const auto& fs : r.few_shot) {
      csv_row(f, r.model_tag, "few_shot_auroc_mean", frac_group(fs.fraction), fs.auroc_mean);
      csv_row(f, r.model_tag, "few_shot_auroc_std", frac_group(fs.fraction), fs.auroc_std);
    }
  }
}

void write_plot_data(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  // ranked from highest to lowest zero-shot accuracy; stable on ties
  std::vector<size_t> order(reports.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return reports[a].zero_shot_accuracy > reports[b].zero_shot_accuracy;
  });

  ordered_json ranked = ordered_json::array();
  for (size_t i : order) {
    ranked.push_back({{"model", reports[i].model_tag},
                      {"accuracy", reports[i].zero_shot_accuracy}});
  }

  // per-organ bars, organs in their registry order where present
  std::vector<std::string> organs;
  for (const auto& r : reports) {
    for (const auto& g : r.zero_shot_by_organ.groups) {
      if (std::find(organs.begin(), organs.end(), g.group) == organs.end()) {
        organs.push_back(g.group);
      }
    }
  }
  std::sort(organs.begin(), organs.end());
  ordered_json per_organ = ordered_json::object();
  for (const auto& organ : organs) {
    ordered_json bars = ordered_json::array();
    for (const auto& r : reports) {
      for (const auto& g : r.zero_shot_by_organ.groups) {
        if (g.group == organ) {
          bars.push_back({{"model", r.model_tag}, {"accuracy", g.accuracy}, {"count", g.count}});
        }
      }
    }
    per_organ[organ] = std::move(bars);
  }

  ordered_json alignment = ordered_json::array();
  ordered_json few_shot = ordered_json::array();
  for (const auto& r : reports) {
    alignment.push_back({{"model", r.model_tag},
                         {"paired", r.paired_alignment},
                         {"cross", r.cross_alignment}});
    for (const auto& fs : r.few_shot) {
      few_shot.push_back({{"model", r.model_tag},
                          {"fraction", fs.fraction},
                          {"auroc_mean", fs.auroc_mean},
                          {"auroc_std", fs.auroc_std}});
    }
  }

  ordered_json doc = {{"ranked_zero_shot", ranked},
                      {"per_organ", per_organ},
                      {"alignment", alignment},
                      {"few_shot", few_shot},
                      {"cross_alignment_definition", kCrossAlignmentNote}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write plot data: " + path.string());
  f << doc.dump(2) << "\n";
}

// Minimal self-contained grouped bar chart; fixed-precision coordinates keep
// re-renders byte-identical.
void write_svg(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::vector<std::string> groups{"overall"};
  for (const auto& r : reports) {
    for (const auto& g : r.zero_shot_by_organ.groups) {
      if (std::find(groups.begin(), groups.end(), g.group) == groups.end()) {
        groups.push_back(g.group);
      }
    }
  }
  const std::vector<std::string> palette{"#4878a8", "#e49444", "#5ba053", "#c44e52",
                                         "#8172b2", "#937860"};
  const double bar_w = 26.0, gap = 8.0, group_gap = 30.0;
  const double chart_h = 220.0, margin_left = 50.0, margin_top = 40.0, margin_bottom = 60.0;
  double group_w = reports.size() * bar_w + (reports.empty() ? 0 : (reports.size() - 1) * gap);
  double width = margin_left + groups.size() * (group_w + group_gap) + 20.0;
  double height = margin_top + chart_h + margin_bottom;

  auto coord = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  auto accuracy_of = [&](const EvalReport& r, const std::string& group) -> double {
    if (group == "overall") return r.zero_shot_accuracy;
    for (const auto& g : r.zero_shot_by_organ.groups) {
      if (g.group == group) return g.accuracy;
    }
    return 0.0;
  };

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write SVG: " + path.string());
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << coord(width) << "\" height=\""
    << coord(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  f << "  <text x=\"" << coord(margin_left) << "\" y=\"20\" font-size=\"14\">"
    << "zero-shot accuracy by organ</text>\n";
  // y axis gridlines at 0, 0.25, 0.5, 0.75, 1
  for (int i = 0; i <= 4; ++i) {
    double frac = i / 4.0;
    double y = margin_top + chart_h * (1.0 - frac);
    f << "  <line x1=\"" << coord(margin_left) << "\" y1=\"" << coord(y) << "\" x2=\""
      << coord(width - 10.0) << "\" y2=\"" << coord(y) << "\" stroke=\"#dddddd\"/>\n";
    f << "  <text x=\"" << coord(margin_left - 34.0) << "\" y=\"" << coord(y + 4.0) << "\">"
      << fmt(frac) << "</text>\n";
  }
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    double gx = margin_left + gi * (group_w + group_gap);
    for (size_t ri = 0; ri < reports.size(); ++ri) {
      double acc = accuracy_of(reports[ri], groups[gi]);
      double h = chart_h * std::clamp(acc, 0.0, 1.0);
      double x = gx + ri * (bar_w + gap);
      double y = margin_top + chart_h - h;
      f << "  <rect x=\"" << coord(x) << "\" y=\"" << coord(y) << "\" width=\"" << coord(bar_w)
        << "\" height=\"" << coord(h) << "\" fill=\"" << palette[ri % palette.size()] << "\"/>\n";
    }
    f << "  <text x=\"" << coord(gx) << "\" y=\"" << coord(margin_top + chart_h + 16.0) << "\">"
      << groups[gi] << "</text>\n";
  }
  // legend
  double ly = margin_top + chart_h + 34.0;
  double lx = margin_left;
  for (size_t ri = 0; ri < reports.size(); ++ri) {
    f << "  <rect x=\"" << coord(lx) << "\" y=\"" << coord(ly - 10.0)
      << "\" width=\"12\" height=\"12\" fill=\"" << palette[ri % palette.size()] << "\"/>\n";
    f << "  <text x=\"" << coord(lx + 16.0) << "\" y=\"" << coord(ly) << "\">"
      << reports[ri].model_tag << "</text>\n";
    lx += 16.0 + 8.0 * reports[ri].model_tag.size() + 24.0;
  }
  f << "</svg>\n";
}

}  // namespace

ReportFiles emit_report(const std::vector<EvalReport>& reports,
                        const std::filesystem::path& out_dir, bool render_svg) {
  if (reports.empty()) throw std::invalid_argument("emit_report: no reports to emit");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory: " + out_dir.string());

  ReportFiles files;
  files.csv = out_dir / "metrics.csv";
  files.plot_data = out_dir / "plot_data.json";
  write_csv(reports, files.csv);
  write_plot_data(reports, files.plot_data);
  if (render_svg) {
    files.svg = out_dir / "figures.svg";
    write_svg(reports, files.svg);
  }
  return files;
}

}  // namespace usclip
