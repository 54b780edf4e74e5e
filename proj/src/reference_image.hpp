#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "lipres/geometry.hpp"

namespace lipres::detail {

// Texture values on a reference frame's mask, rasterized over the mask's
// bounding box. Pixels off the mask are filled outward ring by ring by
// linear extrapolation, so gradients and bilinear lookups near the boundary
// see a smooth continuation.
class ReferenceImage {
 public:
  ReferenceImage(const ReferenceFrame& frame, const Eigen::VectorXd& values) {
    int x1 = 0, y1 = 0;
    x0_ = y0_ = 0;
    bool first = true;
    for (const auto& p : frame.mask) {
      const int x = static_cast<int>(p.x), y = static_cast<int>(p.y);
      if (first) {
        x0_ = x1 = x;
        y0_ = y1 = y;
        first = false;
      }
      x0_ = std::min(x0_, x);
      x1 = std::max(x1, x);
      y0_ = std::min(y0_, y);
      y1 = std::max(y1, y);
    }
    x0_ -= 2;
    y0_ -= 2;
    w_ = x1 - x0_ + 3;
    h_ = y1 - y0_ + 3;
    data_.assign(static_cast<std::size_t>(w_) * h_, 0.0);
    std::vector<char> known(data_.size(), 0);
    for (std::size_t k = 0; k < frame.mask.size(); ++k) {
      const auto idx = index(static_cast<int>(frame.mask[k].x), static_cast<int>(frame.mask[k].y));
      data_[idx] = values[static_cast<Eigen::Index>(k)];
      known[idx] = 1;
    }
    // Grow the known region outward until everything is filled.
    bool changed = true;
    while (changed) {
      changed = false;
      std::vector<char> next = known;
      std::vector<double> nd = data_;
      for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w_ + x;
          if (known[i]) continue;
          // Linear extrapolation along every direction with two known
          // pixels; plain neighbour average where none exists.
          double sum = 0.0, lin = 0.0;
          int n = 0, nl = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0) continue;
              const int xx = x + dx, yy = y + dy;
              if (xx < 0 || yy < 0 || xx >= w_ || yy >= h_) continue;
              const std::size_t j = static_cast<std::size_t>(yy) * w_ + xx;
              if (!known[j]) continue;
              sum += data_[j];
              ++n;
              const int x2 = x + 2 * dx, y2 = y + 2 * dy;
              if (x2 < 0 || y2 < 0 || x2 >= w_ || y2 >= h_) continue;
              const std::size_t j2 = static_cast<std::size_t>(y2) * w_ + x2;
              if (!known[j2]) continue;
              lin += 2.0 * data_[j] - data_[j2];
              ++nl;
            }
          if (nl > 0) {
            sum = lin;
            n = nl;
          }
          if (n > 0) {
            nd[i] = sum / n;
            next[i] = 1;
            changed = true;
          }
        }
      known.swap(next);
      data_.swap(nd);
    }
  }

  double at(int x, int y) const {
    x = std::clamp(x - x0_, 0, w_ - 1);
    y = std::clamp(y - y0_, 0, h_ - 1);
    return data_[static_cast<std::size_t>(y) * w_ + x];
  }

  double sample(double x, double y) const {
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const int ix = static_cast<int>(fx0), iy = static_cast<int>(fy0);
    const double fx = x - fx0, fy = y - fy0;
    const double top = at(ix, iy) + fx * (at(ix + 1, iy) - at(ix, iy));
    const double bottom = at(ix, iy + 1) + fx * (at(ix + 1, iy + 1) - at(ix, iy + 1));
    return top + fy * (bottom - top);
  }

  // Catmull-Rom bicubic sample; interpolates the grid values with a
  // continuous gradient.
  double sample_cubic(double x, double y) const {
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const int ix = static_cast<int>(fx0), iy = static_cast<int>(fy0);
    const auto wx = weights(x - fx0), wy = weights(y - fy0);
    double v = 0.0;
    for (int j = 0; j < 4; ++j) {
      double row = 0.0;
      for (int i = 0; i < 4; ++i) row += wx[i] * at(ix - 1 + i, iy - 1 + j);
      v += wy[j] * row;
    }
    return v;
  }

  // Central-difference gradient at an integer position.
  std::pair<double, double> gradient(int x, int y) const {
    return {0.5 * (at(x + 1, y) - at(x - 1, y)), 0.5 * (at(x, y + 1) - at(x, y - 1))};
  }

 private:
  static std::array<double, 4> weights(double t) {
    const double t2 = t * t, t3 = t2 * t;
    return {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t), 0.5 * (t3 - t2)};
  }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y - y0_) * w_ + (x - x0_); }

  int x0_ = 0, y0_ = 0, w_ = 0, h_ = 0;
  std::vector<double> data_;
};

}  // namespace lipres::detail
