#include "deepinv/io/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "deepinv/core/errors.hpp"
#include "deepinv/io/archive.hpp"

namespace deepinv {

namespace {

constexpr double kWidth = 640, kHeight = 420, kMargin = 56;

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  double py(double y) const { return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin); }
};

void pad(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double d = 0.05 * (hi - lo);
  lo -= d;
  hi += d;
}

void header(std::ostream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
}

void axes(std::ostream& out, const Frame& f, const std::string& y_label, bool log_y, bool x_ticks) {
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
      << kHeight - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << kMargin - 4 << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">"
        << tick(log_y ? std::pow(10.0, y) : y) << "</text>\n";
    if (x_ticks) {
      const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
      out << "<text x=\"" << num(f.px(x)) << "\" y=\"" << kHeight - kMargin + 14 << "\" text-anchor=\"middle\">"
          << tick(x) << "</text>\n";
    }
  }
  out << "<text x=\"14\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 14 " << kHeight / 2
      << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
}

void legend(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& entries) {
  double y = kMargin + 14;
  for (const auto& [label, color] : entries) {
    out << "<rect x=\"" << kWidth - kMargin - 120 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
        << color << "\"/>\n";
    out << "<text x=\"" << kWidth - kMargin - 105 << "\" y=\"" << y << "\">" << escape(label) << "</text>\n";
    y += 16;
  }
}

double to_axis(double v, bool log_y) {
  if (!log_y) return v;
  return std::log10(std::max(v, 1e-300));
}

}  // namespace

void write_ppm_grid(const std::filesystem::path& path, const Tensor& images, std::size_t side, std::size_t columns,
                    std::size_t zoom) {
  if (images.rank() != 2 || images.cols() != side * side) throw DimensionError("write_ppm_grid: rows must be side^2 images");
  if (columns < 1 || zoom < 1) throw ContractError("write_ppm_grid: columns and zoom must be positive");
  const std::size_t n = images.rows();
  const std::size_t rows = (n + columns - 1) / columns;
  const std::size_t gap = 1;
  const std::size_t cell = side * zoom + gap;
  const std::size_t width = columns * cell + gap, height = std::max<std::size_t>(rows, 1) * cell + gap;
  std::vector<unsigned char> pixels(width * height * 3, 64);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ox = (i % columns) * cell + gap, oy = (i / columns) * cell + gap;
    for (std::size_t y = 0; y < side * zoom; ++y) {
      for (std::size_t x = 0; x < side * zoom; ++x) {
        const double v = std::clamp(images.at(i, (y / zoom) * side + x / zoom), -1.0, 1.0);
        const auto g = static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
        unsigned char* p = &pixels[((oy + y) * width + ox + x) * 3];
        p[0] = p[1] = p[2] = g;
      }
    }
  }
  auto out = open_out(path);
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_svg_scatter(const std::filesystem::path& path, const std::string& title,
                       const std::vector<ScatterSeries>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.points.rank() != 2 || s.points.cols() != 2) throw DimensionError("write_svg_scatter: points must be [N x 2]");
    for (std::size_t i = 0; i < s.points.rows(); ++i) {
      x0 = std::min(x0, s.points.at(i, 0));
      x1 = std::max(x1, s.points.at(i, 0));
      y0 = std::min(y0, s.points.at(i, 1));
      y1 = std::max(y1, s.points.at(i, 1));
    }
  }
  if (!std::isfinite(x0)) x0 = y0 = -1, x1 = y1 = 1;
  pad(x0, x1);
  pad(y0, y1);
  const Frame f{x0, x1, y0, y1};
  auto out = open_out(path);
  header(out, title);
  axes(out, f, "y", false, true);
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& s : series) {
    keys.emplace_back(s.label, s.color);
    for (std::size_t i = 0; i < s.points.rows(); ++i) {
      out << "<circle cx=\"" << num(f.px(s.points.at(i, 0))) << "\" cy=\"" << num(f.py(s.points.at(i, 1)))
          << "\" r=\"2\" fill=\"" << s.color << "\" fill-opacity=\"0.6\"/>\n";
    }
  }
  legend(out, keys);
  out << "</svg>\n";
}

void write_svg_lines(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                     const std::vector<LineSeries>& series, bool log_y) {
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  std::size_t n = 1;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (Real v : s.y) {
      y0 = std::min(y0, to_axis(v, log_y));
      y1 = std::max(y1, to_axis(v, log_y));
    }
  }
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  pad(y0, y1);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(n - 1, 1)), y0, y1};
  auto out = open_out(path);
  header(out, title);
  axes(out, f, y_label, log_y, true);
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& s : series) {
    keys.emplace_back(s.label, s.color);
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      out << num(f.px(static_cast<double>(i))) << ',' << num(f.py(to_axis(s.y[i], log_y))) << ' ';
    }
    out << "\"/>\n";
  }
  legend(out, keys);
  out << "</svg>\n";
}

void write_svg_bars(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                    const std::vector<std::pair<std::string, Real>>& bars, bool log_y) {
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& [_, v] : bars) {
    y0 = std::min(y0, to_axis(v, log_y));
    y1 = std::max(y1, to_axis(v, log_y));
  }
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (!log_y) y0 = std::min(y0, 0.0);
  pad(y0, y1);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(bars.size(), 1)), y0, y1};
  auto out = open_out(path);
  header(out, title);
  axes(out, f, y_label, log_y, false);
  static const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"};
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double top = f.py(to_axis(bars[i].second, log_y));
    const double base = f.py(y0);
    const double left = f.px(i + 0.15), right = f.px(i + 0.85);
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left) << "\" height=\""
        << num(base - top) << "\" fill=\"" << kColors[i % 5] << "\"/>\n";
    out << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << kHeight - kMargin + 14
        << "\" text-anchor=\"middle\">" << escape(bars[i].first) << "</text>\n";
    out << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(top - 4) << "\" text-anchor=\"middle\">"
        << tick(bars[i].second) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace deepinv
