#include "plots.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mmcot::tools {
namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_svg(const std::filesystem::path& path, const BarChart& chart) {
  constexpr double width = 720, height = 400, left = 60, right = 20, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const double peak = chart.values.empty() ? 1.0 : std::max(1e-12, *std::max_element(chart.values.begin(), chart.values.end()));
  const double bar_w = chart.values.empty() ? 0.0 : plot_w / static_cast<double>(chart.values.size());

  std::ostringstream svg;
  svg.precision(4);
  svg << std::fixed;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(chart.title)
      << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << peak << "</text>\n";
  svg << "<text x=\"" << left - 6 << "\" y=\"" << top + plot_h << "\" text-anchor=\"end\">0</text>\n";
  for (std::size_t i = 0; i < chart.values.size(); ++i) {
    const double h = plot_h * std::max(0.0, chart.values[i]) / peak;
    const double x = left + bar_w * static_cast<double>(i);
    svg << "<rect x=\"" << x + bar_w * 0.1 << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w * 0.8
        << "\" height=\"" << h << "\" fill=\"steelblue\"/>\n";
    if (i < chart.labels.size() && !chart.labels[i].empty()) {
      svg << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + plot_h + 14 << "\" text-anchor=\"middle\">"
          << escape(chart.labels[i]) << "</text>\n";
    }
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
      << escape(chart.x_label) << "</text>\n";
  svg << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << top + plot_h / 2 << ")\">" << escape(chart.y_label) << "</text>\n";
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg.str();
}

}  // namespace mmcot::tools
