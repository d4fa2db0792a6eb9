#pragma once

#include <filesystem>
#include <vector>

#include "uscliplab/evaluation.hpp"

namespace usclip {

struct ReportFiles {
  std::filesystem::path csv;
  std::filesystem::path plot_data;
  std::filesystem::path svg;  // empty unless rendered
};

// Writes metrics.csv (one row per model/metric/group), plot_data.json
// (ranked per-model accuracies plus per-organ bars) and, when asked, a
// self-contained SVG bar chart. Re-emitting the same reports is
// byte-identical: no timestamps, fixed ordering, fixed float formatting.
ReportFiles emit_report(const std::vector<EvalReport>& reports,
                        const std::filesystem::path& out_dir, bool render_svg = false);

}  // namespace usclip
