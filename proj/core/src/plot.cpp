#include "dssl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "dssl/io.hpp"

namespace dssl::plot {

namespace {

// 5x7 bitmap glyphs for the characters plots actually need.
struct Glyph {
  char ch;
  const char* rows[7];
};

const Glyph kGlyphs[] = {
    {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
    {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
    {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
    {'3', {" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "}},
    {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
    {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
    {'6', {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "}},
    {'7', {"#####", "    #", "   # ", "  #  ", "  #  ", "  #  ", "  #  "}},
    {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
    {'9', {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "}},
    {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
    {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
    {'%', {"##  #", "## # ", "  #  ", "  #  ", " #   ", "# ##", "#  ##"}},
    {'=', {"     ", "     ", "#####", "     ", "#####", "     ", "     "}},
    {'_', {"     ", "     ", "     ", "     ", "     ", "     ", "#####"}},
    {' ', {"     ", "     ", "     ", "     ", "     ", "     ", "     "}},
};

const Glyph* find_glyph(char c) {
  if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  static const Glyph kLetters[] = {
      {'a', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'b', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
      {'c', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
      {'d', {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "}},
      {'e', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
      {'f', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
      {'g', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ### "}},
      {'h', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'i', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'j', {"    #", "    #", "    #", "    #", "    #", "#   #", " ### "}},
      {'k', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
      {'l', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
      {'m', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
      {'n', {"#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #"}},
      {'o', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'p', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
      {'q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
      {'r', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
      {'s', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
      {'t', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'u', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'v', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
      {'w', {"#   #", "#   #", "#   #", "# # #", "# # #", "## ##", "#   #"}},
      {'x', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
      {'y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
  };
  for (const Glyph& g : kLetters)
    if (g.ch == c) return &g;
  for (const Glyph& g : kGlyphs)
    if (g.ch == c) return &g;
  return nullptr;
}

void draw_glyph(Image& img, char c, int x0, int y0, float r, float g, float b) {
  const Glyph* glyph = find_glyph(c);
  if (!glyph) return;
  for (int row = 0; row < 7; ++row) {
    const char* line = glyph->rows[row];
    for (int col = 0; col < 5 && line[col]; ++col) {
      if (line[col] != '#') continue;
      const int x = x0 + col, y = y0 + row;
      if (x < 0 || x >= img.width || y < 0 || y >= img.height) continue;
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
  }
}

void draw_text(Image& img, const std::string& text, int x0, int y0) {
  for (size_t i = 0; i < text.size(); ++i)
    draw_glyph(img, text[i], x0 + static_cast<int>(i) * 6, y0, 0.1f, 0.1f,
               0.1f);
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, float r,
               float g, float b) {
  const int steps =
      std::max(1, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0),
                                                      std::abs(y1 - y0)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) continue;
    img.at(0, y, x) = r;
    img.at(1, y, x) = g;
    img.at(2, y, x) = b;
  }
}

void draw_dot(Image& img, int cx, int cy, float r, float g, float b) {
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      if (dx * dx + dy * dy > 4) continue;
      const int x = cx + dx, y = cy + dy;
      if (x < 0 || x >= img.width || y < 0 || y >= img.height) continue;
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
}

std::string format_tick(double v) {
  char buf[32];
  if (std::abs(v - std::round(v)) < 1e-9)
    std::snprintf(buf, sizeof(buf), "%.0f", v);
  else
    std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series, int width, int height) {
  Image img(3, height, width);
  std::fill(img.data.begin(), img.data.end(), 1.0f);

  const int ml = 70, mr = 20, mt = 40, mb = 50;
  const int px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const Series& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin) || !std::isfinite(ymin)) {
    xmin = 0; xmax = 1; ymin = 0; ymax = 1;
  }
  if (xmax - xmin < 1e-12) { xmax = xmin + 1.0; }
  const double ypad = std::max(1e-12, (ymax - ymin) * 0.1);
  ymin -= ypad;
  ymax += ypad;

  auto to_px = [&](double x) {
    return px0 + (x - xmin) / (xmax - xmin) * (px1 - px0);
  };
  auto to_py = [&](double y) {
    return py1 - (y - ymin) / (ymax - ymin) * (py1 - py0);
  };

  draw_line(img, px0, py1, px1, py1, 0, 0, 0);
  draw_line(img, px0, py0, px0, py1, 0, 0, 0);

  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    const int tx = static_cast<int>(to_px(xv));
    const int ty = static_cast<int>(to_py(yv));
    draw_line(img, tx, py1, tx, py1 + 4, 0, 0, 0);
    draw_line(img, px0 - 4, ty, px0, ty, 0, 0, 0);
    draw_text(img, format_tick(xv), tx - 10, py1 + 8);
    draw_text(img, format_tick(yv), px0 - 60, ty - 3);
  }

  const float palette[4][3] = {
      {0.85f, 0.2f, 0.2f}, {0.2f, 0.35f, 0.85f}, {0.15f, 0.6f, 0.25f},
      {0.7f, 0.5f, 0.1f}};
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const float* c = palette[si % 4];
    for (size_t i = 0; i + 1 < s.x.size(); ++i)
      draw_line(img, to_px(s.x[i]), to_py(s.y[i]), to_px(s.x[i + 1]),
                to_py(s.y[i + 1]), c[0], c[1], c[2]);
    for (size_t i = 0; i < s.x.size(); ++i)
      draw_dot(img, static_cast<int>(to_px(s.x[i])),
               static_cast<int>(to_py(s.y[i])), c[0], c[1], c[2]);
    draw_text(img, s.label, px0 + 10 + static_cast<int>(si) * 140, py0 - 14);
    draw_dot(img, px0 + 2 + static_cast<int>(si) * 140, py0 - 10, c[0], c[1],
             c[2]);
  }

  draw_text(img, title, px0, 8);
  draw_text(img, x_label, (px0 + px1) / 2 - static_cast<int>(x_label.size()) * 3,
            height - 16);
  draw_text(img, y_label, 8, py0 - 28);

  io::write_png(path, img);
}

}  // namespace dssl::plot
