#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include "support.hpp"

namespace pseg::testing {

std::vector<double> oracle_softmax(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> e(x.size());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += e[i] = std::exp(x[i] - mx);
  for (double& v : e) v /= s;
  return e;
}

std::vector<double> oracle_guided_row(const std::vector<double>& a_row, double alpha,
                                      const std::vector<double>& s) {
  const auto s_soft = oracle_softmax(s);
  std::vector<double> pre(a_row.size());
  for (std::size_t j = 0; j < a_row.size(); ++j) pre[j] = a_row[j] + alpha * s_soft[j];
  return oracle_softmax(pre);
}

std::vector<double> oracle_confidence(const Tensor& locals, const FeatureMap& f) {
  const int h = f.h(), w = f.w(), c = f.c();
  const std::size_t n = locals.dim(0);
  std::vector<double> out(std::size_t(h) * w);
  for (int cell = 0; cell < h * w; ++cell) {
    double norm = 0;
    for (int k = 0; k < c; ++k) norm += double(f.grid[cell * c + k]) * f.grid[cell * c + k];
    norm = std::sqrt(norm);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0, li = 0;
      for (int k = 0; k < c; ++k) {
        dot += double(locals.at(i, k)) * f.grid[cell * c + k];
        li += double(locals.at(i, k)) * locals.at(i, k);
      }
      sum += dot / (norm * std::sqrt(li));
    }
    out[cell] = sum / n;
  }
  return out;
}

std::vector<bool> oracle_band(const Mask& m, int d) {
  std::vector<bool> band(m.bits.size(), false);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      int best = std::min({x + 1, y + 1, m.width - x, m.height - y});
      for (int v = 0; v < m.height; ++v)
        for (int u = 0; u < m.width; ++u)
          if (!m.at(u, v)) best = std::min(best, std::abs(u - x) + std::abs(v - y));
      band[std::size_t(y) * m.width + x] = best <= d;
    }
  return band;
}

double oracle_set_iou(const std::vector<bool>& a, const std::vector<bool>& b) {
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : double(inter) / uni;
}

int oracle_band_width(int w, int h, double frac) {
  return std::max(1, int(std::floor(frac * std::hypot(w, h) + 0.5)));
}

double oracle_boundary_f(const Mask& p, const Mask& g, int d) {
  const auto bp = oracle_band(p, 1), bg = oracle_band(g, 1);
  const int w = p.width;
  const auto matched = [&](const std::vector<bool>& from, const std::vector<bool>& to) {
    int hit = 0, n = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
      if (!from[i]) continue;
      ++n;
      const int x = int(i) % w, y = int(i) / w;
      for (std::size_t j = 0; j < to.size(); ++j)
        if (to[j] && std::abs(int(j) % w - x) + std::abs(int(j) / w - y) <= d) {
          ++hit;
          break;
        }
    }
    return std::pair{hit, n};
  };
  const auto [hp, np] = matched(bp, bg);
  const auto [hg, ng] = matched(bg, bp);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double pr = double(hp) / np, rc = double(hg) / ng;
  return pr + rc == 0 ? 0.0 : 2 * pr * rc / (pr + rc);
}

FitFixture fit_fixture(std::uint64_t seed, int size) {
  Rng rng(seed);
  FitFixture f{Tensor({3, std::size_t(size), std::size_t(size)}), Mask(size, size)};
  const int lo = size / 5, hi = size - size / 5;
  const int x0 = rng.uniform_int(lo, lo + 3), y0 = rng.uniform_int(lo, lo + 3);
  const int x1 = rng.uniform_int(hi - 3, hi), y1 = rng.uniform_int(hi - 3, hi);
  const int inset = std::max(2, size / 10), outset = std::max(2, size / 8);
  const std::size_t plane = std::size_t(size) * size;
  const auto inside = [](int x, int y, int a, int b, int c, int d) { return x >= a && x < c && y >= b && y < d; };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const std::size_t i = std::size_t(y) * size + x;
      const bool sub = inside(x, y, x0 + inset, y0 + inset, x1 - inset, y1 - inset);
      const bool part = inside(x, y, x0, y0, x1, y1);
      const bool sup = inside(x, y, x0 - outset, y0 - outset, x1 + outset, y1 + outset);
      const auto logit = [&](bool on) { return static_cast<float>((on ? 8.0 : -8.0) + rng.normal(0, 1)); };
      f.scales[i] = logit(sub);
      f.scales[plane + i] = logit(part);
      f.scales[2 * plane + i] = logit(sup);
      f.target.bits[i] = f.scales[plane + i] > 0.0f;
    }
  return f;
}

double oracle_fit_loss(const FitFixture& f, double w1, double w2) {
  const std::size_t n = f.target.bits.size();
  double bce = 0, inter = 0, psum = 0, gsum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = w1 * f.scales[i] + w2 * f.scales[n + i] + (1 - w1 - w2) * f.scales[2 * n + i];
    const double g = f.target.bits[i];
    const double p = 1.0 / (1.0 + std::exp(-z));
    bce += -(g * std::log(std::max(p, 1e-300)) + (1 - g) * std::log(std::max(1 - p, 1e-300)));
    inter += p * g;
    psum += p;
    gsum += g;
  }
  return bce / n + 1.0 - (2.0 * inter + 1.0) / (psum + gsum + 1.0);
}

double grid_search_loss(const FitFixture& f) {
  double best = 1e300;
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j) best = std::min(best, oracle_fit_loss(f, -0.5 + 0.01 * i, -0.5 + 0.01 * j));
  return best;
}

Tensor unit_rows(Rng& rng, std::size_t n, std::size_t c) {
  Tensor t = random_tensor(rng, {n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (float v : t.row(i)) s += double(v) * v;
    for (float& v : t.row(i)) v = static_cast<float>(v / std::sqrt(s));
  }
  return t;
}

}  // namespace pseg::testing
