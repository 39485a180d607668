#pragma once

#include <filesystem>
#include <fstream>

#include "avc/tensor.hpp"

// Minimal raster plotting: curves and scatter plots written as binary PPM.
namespace avc::plot {

struct Rgb {
  unsigned char r, g, b;
};

struct Canvas {
  std::size_t width, height;
  std::vector<Rgb> pix;

  Canvas(std::size_t w, std::size_t h, Rgb bg = {255, 255, 255})
      : width(w), height(h), pix(w * h, bg) {}

  void set(long x, long y, Rgb c) {
    if (x >= 0 && x < long(width) && y >= 0 && y < long(height))
      pix[std::size_t(y) * width + std::size_t(x)] = c;
  }

  void dot(long x, long y, Rgb c, long r = 1) {
    for (long dy = -r; dy <= r; ++dy)
      for (long dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r) set(x + dx, y + dy, c);
  }

  void line(long x0, long y0, long x1, long y1, Rgb c) {
    long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1, err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      long e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void save_ppm(const std::filesystem::path& p) const {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << "P6\n" << width << " " << height << "\n255\n";
    for (const Rgb& c : pix) {
      os.put(char(c.r)); os.put(char(c.g)); os.put(char(c.b));
    }
  }
};

// Image tensor [C,H,W] in [0,1] to PPM.
inline void save_image_ppm(const Tensor& img, const std::filesystem::path& p) {
  if (img.rank() != 3) throw std::invalid_argument("save_image_ppm: expects [C,H,W]");
  std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
  Canvas c(W, H);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      auto q = [&](std::size_t ch) {
        double v = img.at3(C == 3 ? ch : 0, y, x);
        return static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
      };
      c.set(long(x), long(y), {q(0), q(1), q(2)});
    }
  c.save_ppm(p);
}

struct Series {
  std::vector<double> y;
  Rgb color{30, 60, 200};
};

inline void save_curves_ppm(const std::vector<Series>& series,
                            const std::filesystem::path& p, std::size_t W = 640,
                            std::size_t H = 400) {
  Canvas c(W, H);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        n = std::max(n, s.y.size());
      }
  if (n < 2 || !(hi > lo)) { hi = lo + 1.0; }
  long margin = 10;
  auto sx = [&](std::size_t i) {
    return margin + long(double(i) / double(std::max<std::size_t>(n - 1, 1)) *
                         double(W - 2 * margin));
  };
  auto sy = [&](double v) {
    return long(H) - margin -
           long((v - lo) / (hi - lo) * double(H - 2 * std::size_t(margin)));
  };
  c.line(margin, long(H) - margin, long(W) - margin, long(H) - margin, {0, 0, 0});
  c.line(margin, margin, margin, long(H) - margin, {0, 0, 0});
  for (const auto& s : series)
    for (std::size_t i = 1; i < s.y.size(); ++i)
      if (std::isfinite(s.y[i - 1]) && std::isfinite(s.y[i]))
        c.line(sx(i - 1), sy(s.y[i - 1]), sx(i), sy(s.y[i]), s.color);
  c.save_ppm(p);
}

inline void save_scatter_ppm(const Tensor& a, const Tensor& b,
                             const std::filesystem::path& p, std::size_t W = 500,
                             std::size_t H = 500) {
  Canvas c(W, H);
  double lox = 1e300, hix = -1e300, loy = 1e300, hiy = -1e300;
  auto scan = [&](const Tensor& t) {
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
      lox = std::min(lox, t.at2(i, 0)); hix = std::max(hix, t.at2(i, 0));
      loy = std::min(loy, t.at2(i, 1)); hiy = std::max(hiy, t.at2(i, 1));
    }
  };
  scan(a);
  scan(b);
  if (!(hix > lox)) hix = lox + 1.0;
  if (!(hiy > loy)) hiy = loy + 1.0;
  long margin = 12;
  auto draw = [&](const Tensor& t, Rgb col) {
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
      long x = margin + long((t.at2(i, 0) - lox) / (hix - lox) * double(W - 2 * margin));
      long y = long(H) - margin -
               long((t.at2(i, 1) - loy) / (hiy - loy) * double(H - 2 * std::size_t(margin)));
      c.dot(x, y, col, 2);
    }
  };
  draw(a, {40, 90, 220});
  draw(b, {220, 70, 40});
  c.save_ppm(p);
}

}  // namespace avc::plot
