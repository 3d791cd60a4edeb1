#include "smile/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace smile::report {

namespace {

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return std::string(buf);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string cross_val_csv(const eval::CrossValResult& cv) {
  std::string out = "fold,n_test,accuracy,macro_f1,test_subjects\n";
  for (const eval::FoldOutcome& f : cv.folds) {
    std::vector<std::string> subj;
    for (int s : f.test_subjects) subj.push_back(std::to_string(s));
    out += std::to_string(f.fold) + "," + std::to_string(f.metrics.total) + "," +
           fmt_double(f.metrics.accuracy) + "," + fmt_double(f.metrics.macro_f1) + "," +
           join(subj, ";") + "\n";
  }
  out += "mean," + std::to_string(cv.pooled.total) + "," + fmt_double(cv.mean_accuracy) +
         "," + fmt_double(cv.mean_macro_f1) + ",\n";
  out += "sd,," + fmt_double(cv.sd_accuracy) + ",,\n";
  return out;
}

std::string ablation_csv(const eval::AblationResult& ab) {
  std::string out = "variant,mean_cv_accuracy\n";
  for (std::size_t v = 0; v < ab.variants.size(); ++v)
    out += ab.variants[v] + "," + fmt_double(ab.mean_cv_accuracy[v]) + "\n";
  return out;
}

std::string improvement_csv(const eval::AblationResult& ab) {
  std::string out = "variant," + join(ab.variants, ",") + "\n";
  for (Eigen::Index u = 0; u < ab.improvement.rows(); ++u) {
    std::vector<std::string> cells;
    for (Eigen::Index v = 0; v < ab.improvement.cols(); ++v)
      cells.push_back(fmt_double(ab.improvement(u, v)));
    out += ab.variants[static_cast<std::size_t>(u)] + "," + join(cells, ",") + "\n";
  }
  return out;
}

std::string bar_chart_svg(const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& title) {
  if (labels.size() != values.size()) throw ConfigError("bar chart labels/values disagree");
  const int width = 520, height = 340;
  const int left = 60, bottom = 60, top = 40, right = 20;
  const int plot_w = width - left - right, plot_h = height - top - bottom;
  double vmax = 0.0;
  for (double v : values) vmax = std::max(vmax, v);
  if (vmax <= 0) vmax = 1.0;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(width) + "\" height=\"" + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(width / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" + xml_escape(title) + "</text>\n";

  const double slot = static_cast<double>(plot_w) / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = plot_h * (values[i] / vmax);
    const double x = left + slot * static_cast<double>(i) + slot * 0.15;
    const double y = top + (plot_h - h);
    svg += "<rect x=\"" + fmt4(x) + "\" y=\"" + fmt4(y) + "\" width=\"" + fmt4(slot * 0.7) +
           "\" height=\"" + fmt4(h) + "\" fill=\"#4878b0\"/>\n";
    svg += "<text x=\"" + fmt4(x + slot * 0.35) + "\" y=\"" + fmt4(y - 6) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           fmt4(values[i]) + "</text>\n";
    svg += "<text x=\"" + fmt4(x + slot * 0.35) + "\" y=\"" +
           std::to_string(height - bottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           xml_escape(labels[i]) + "</text>\n";
  }
  svg += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top + plot_h) +
         "\" x2=\"" + std::to_string(left + plot_w) + "\" y2=\"" +
         std::to_string(top + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "</svg>\n";
  return svg;
}

std::string heatmap_svg(const std::vector<std::string>& labels, const ad::Mat& values,
                        const std::string& title) {
  if (values.rows() != values.cols() ||
      values.rows() != static_cast<Eigen::Index>(labels.size()))
    throw ConfigError("heatmap labels/matrix disagree");
  const int n = static_cast<int>(labels.size());
  const int cell = 70, left = 110, top = 70;
  const int width = left + n * cell + 30, height = top + n * cell + 40;

  double vmax = 1e-12;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    vmax = std::max(vmax, std::abs(values.data()[i]));

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(width) + "\" height=\"" + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(width / 2) + "\" y=\"28\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" + xml_escape(title) + "</text>\n";

  for (int i = 0; i < n; ++i) {
    svg += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" +
           std::to_string(top + i * cell + cell / 2 + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
           xml_escape(labels[static_cast<std::size_t>(i)]) + "</text>\n";
    svg += "<text x=\"" + std::to_string(left + i * cell + cell / 2) + "\" y=\"" +
           std::to_string(top - 10) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           xml_escape(labels[static_cast<std::size_t>(i)]) + "</text>\n";
  }

  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double val = values(u, v);
      // Blue gradient for gains, light red for losses.
      const double mag = std::min(1.0, std::abs(val) / vmax);
      int rch, gch, bch;
      if (val >= 0) {
        rch = static_cast<int>(255 - 183 * mag);
        gch = static_cast<int>(255 - 135 * mag);
        bch = 255;
      } else {
        rch = 255;
        gch = static_cast<int>(255 - 120 * mag);
        bch = static_cast<int>(255 - 120 * mag);
      }
      char color[8];
      std::snprintf(color, sizeof(color), "#%02x%02x%02x", rch, gch, bch);
      const int x = left + v * cell, y = top + u * cell;
      svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
             "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) +
             "\" fill=\"" + color + "\" stroke=\"#888\"/>\n";
      svg += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
             std::to_string(y + cell / 2 + 4) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
             fmt4(val) + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace smile::report
