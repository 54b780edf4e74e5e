#include "lipres/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <regex>

#include "lipres/error.hpp"

namespace lipres {

namespace {

// Nearest source index for output index i under the pixel-center mapping,
// ties toward the lower index. Evaluated in integers so ties are exact:
// x_src = ((2i+1)W - w) / 2w, nearest-low = ceil(x_src - 1/2).
int nearest_source_index(int i, int out_size, int src_size) {
  const long long num = (2LL * i + 1) * src_size - 2LL * out_size;
  const long long den = 2LL * out_size;
  long long q = num / den;
  if (num % den != 0 && num > 0) ++q;  // ceil for positive; C++ truncates toward zero
  return static_cast<int>(std::clamp<long long>(q, 0, src_size - 1));
}

struct LinearTap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
};

// Bilinear tap for output index i when upsampling src_size -> out_size,
// clamped to the source sample grid.
LinearTap linear_tap(int i, int out_size, int src_size) {
  const double u = static_cast<double>((2LL * i + 1) * src_size - out_size) / (2.0 * out_size);
  if (u <= 0.0) return {0, 0, 0.0};
  if (u >= src_size - 1) return {src_size - 1, src_size - 1, 0.0};
  const int lo = static_cast<int>(std::floor(u));
  return {lo, lo + 1, u - lo};
}

double lerp_bounded(double a, double b, double t) {
  if (t == 0.0 || a == b) return a;
  const double v = a + t * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

void check_resolution(Resolution r) {
  if (r.width < 1 || r.height < 1) throw Error("invalid resolution " + r.str());
}

}  // namespace

std::string Resolution::str() const { return std::to_string(width) + "x" + std::to_string(height); }

Resolution parse_resolution(const std::string& text) {
  static const std::regex re(R"(\s*(\d+)\s*[xX]\s*(\d+)\s*)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw Error("malformed resolution '" + text + "' (expected WxH)");
  Resolution r{std::stoi(m[1]), std::stoi(m[2])};
  check_resolution(r);
  return r;
}

Image::Image(int width, int height, float fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
  check_resolution({width, height});
}

Image::Image(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_resolution({width, height});
  if (data_.size() != static_cast<std::size_t>(width) * height)
    throw Error("image data length does not match " + std::to_string(width) + "x" + std::to_string(height));
  for (float v : data_)
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw Error("image intensity outside [0,1]");
}

double Image::sample(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const double fx = x - x0;
  const double fy = y - y0;
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double top = lerp_bounded(at(x0, y0), at(x1, y0), fx);
  const double bottom = lerp_bounded(at(x0, y1), at(x1, y1), fx);
  return lerp_bounded(top, bottom, fy);
}

Image downsample_nearest(const Image& img, Resolution target) {
  check_resolution(target);
  if (target.width > img.width() || target.height > img.height())
    throw Error("downsample_nearest cannot upscale " + img.resolution().str() + " to " + target.str());
  std::vector<int> xs(target.width), ys(target.height);
  for (int i = 0; i < target.width; ++i) xs[i] = nearest_source_index(i, target.width, img.width());
  for (int j = 0; j < target.height; ++j) ys[j] = nearest_source_index(j, target.height, img.height());
  Image out(target.width, target.height);
  for (int j = 0; j < target.height; ++j)
    for (int i = 0; i < target.width; ++i) out.at(i, j) = img.at(xs[i], ys[j]);
  return out;
}

Image upsample_bilinear(const Image& img, Resolution target) {
  check_resolution(target);
  if (target.width < img.width() || target.height < img.height())
    throw Error("upsample_bilinear cannot downscale " + img.resolution().str() + " to " + target.str());
  std::vector<LinearTap> tx(target.width), ty(target.height);
  for (int i = 0; i < target.width; ++i) tx[i] = linear_tap(i, target.width, img.width());
  for (int j = 0; j < target.height; ++j) ty[j] = linear_tap(j, target.height, img.height());
  Image out(target.width, target.height);
  for (int j = 0; j < target.height; ++j) {
    const LinearTap& v = ty[j];
    for (int i = 0; i < target.width; ++i) {
      const LinearTap& h = tx[i];
      const double top = lerp_bounded(img.at(h.lo, v.lo), img.at(h.hi, v.lo), h.frac);
      const double bottom = lerp_bounded(img.at(h.lo, v.hi), img.at(h.hi, v.hi), h.frac);
      out.at(i, j) = static_cast<float>(lerp_bounded(top, bottom, v.frac));
    }
  }
  return out;
}

Image degrade(const Image& img, Resolution target) {
  return upsample_bilinear(downsample_nearest(img, target), img.resolution());
}

Image degrade_region(const CanvasView& src, Resolution target, Rect roi) {
  const Resolution native = src.canvas;
  check_resolution(target);
  if (target.width > native.width || target.height > native.height)
    throw Error("degrade target " + target.str() + " exceeds canvas " + native.str());
  if (roi.width < 1 || roi.height < 1) throw Error("empty degrade region");

  std::vector<LinearTap> tx(roi.width), ty(roi.height);
  for (int i = 0; i < roi.width; ++i)
    tx[i] = linear_tap(std::clamp(roi.x + i, 0, native.width - 1), native.width, target.width);
  for (int j = 0; j < roi.height; ++j)
    ty[j] = linear_tap(std::clamp(roi.y + j, 0, native.height - 1), native.height, target.height);

  // Low-resolution samples needed by the region.
  const int lx0 = tx.front().lo, lx1 = tx.back().hi;
  const int ly0 = ty.front().lo, ly1 = ty.back().hi;
  const int lw = lx1 - lx0 + 1, lh = ly1 - ly0 + 1;
  std::vector<double> low(static_cast<std::size_t>(lw) * lh);
  for (int j = 0; j < lh; ++j) {
    const int sy = nearest_source_index(ly0 + j, target.height, native.height);
    for (int i = 0; i < lw; ++i) {
      const int sx = nearest_source_index(lx0 + i, target.width, native.width);
      low[static_cast<std::size_t>(j) * lw + i] = src.at(sx, sy);
    }
  }
  auto L = [&](int x, int y) { return low[static_cast<std::size_t>(y - ly0) * lw + (x - lx0)]; };

  Image out(roi.width, roi.height);
  for (int j = 0; j < roi.height; ++j) {
    const LinearTap& v = ty[j];
    for (int i = 0; i < roi.width; ++i) {
      const LinearTap& h = tx[i];
      const double top = lerp_bounded(L(h.lo, v.lo), L(h.hi, v.lo), h.frac);
      const double bottom = lerp_bounded(L(h.lo, v.hi), L(h.hi, v.hi), h.frac);
      out.at(i, j) = static_cast<float>(lerp_bounded(top, bottom, v.frac));
    }
  }
  return out;
}

std::vector<Resolution> resolution_ladder() {
  return {{1440, 1080}, {960, 720}, {720, 540}, {360, 270}, {240, 180}, {180, 135},
          {144, 108},   {120, 90},  {90, 67},   {80, 60},   {72, 54},   {65, 49},
          {69, 45},     {55, 42},   {51, 39},   {48, 36},   {45, 34},   {42, 32}};
}

double resting_lip_height(const Shape& rest_shape, const std::vector<std::size_t>& lip_indices,
                          Resolution native, Resolution target) {
  if (lip_indices.empty()) throw Error("resting_lip_height: empty lip landmark set");
  check_resolution(native);
  check_resolution(target);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i : lip_indices) {
    if (i >= rest_shape.size()) throw Error("resting_lip_height: lip index out of range");
    lo = std::min(lo, rest_shape.points[i].y);
    hi = std::max(hi, rest_shape.points[i].y);
  }
  return (hi - lo) * target.height / static_cast<double>(native.height);
}

float quantize8(double v) {
  const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<float>(q / 255.0);
}

}  // namespace lipres
