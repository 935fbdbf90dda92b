#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mmcot::tools {

struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> labels;  // one per bar; may be sparse (empty strings skipped)
  std::vector<double> values;
};

// Static SVG bar chart.
void write_svg(const std::filesystem::path& path, const BarChart& chart);

}  // namespace mmcot::tools
