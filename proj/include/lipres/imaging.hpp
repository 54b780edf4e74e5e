#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lipres/shape.hpp"

namespace lipres {

struct Resolution {
  int width = 0;
  int height = 0;

  auto operator<=>(const Resolution&) const = default;
  std::string str() const;
};

/// Parses "WxH" (e.g. "1440x1080").
Resolution parse_resolution(const std::string& text);

/// Row-major grayscale image with intensities in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f);
  Image(int width, int height, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  Resolution resolution() const { return {width_, height_}; }
  bool empty() const { return data_.empty(); }

  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const float> pixels() const { return data_; }

  /// Bilinear sample at sub-pixel position; pixel centers sit on integer
  /// coordinates and positions outside the grid clamp to the edge.
  double sample(double x, double y) const;

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

/// A window of a larger canvas. Canvas pixels outside the window read as
/// `background`. A full frame is the window covering the whole canvas.
struct CanvasView {
  const Image* window = nullptr;
  int x0 = 0;
  int y0 = 0;
  Resolution canvas;
  float background = 0.0f;

  static CanvasView whole(const Image& img) { return {&img, 0, 0, img.resolution(), 0.0f}; }

  float at(int x, int y) const {
    const int wx = x - x0;
    const int wy = y - y0;
    if (wx < 0 || wy < 0 || wx >= window->width() || wy >= window->height()) return background;
    return window->at(wx, wy);
  }
};

/// A frame as stored: a window plus its placement on the full canvas.
/// Real footage uses a window covering the whole canvas.
struct Frame {
  Image window;
  int x0 = 0;
  int y0 = 0;
  Resolution canvas;
  float background = 0.0f;

  static Frame whole(Image img) {
    Frame f;
    f.canvas = img.resolution();
    f.window = std::move(img);
    return f;
  }
  CanvasView view() const { return {&window, x0, y0, canvas, background}; }
};

// Resampling. Both directions use the pixel-center convention
// x_src = (i + 0.5) * W / W' - 0.5.

Image downsample_nearest(const Image& img, Resolution target);
Image upsample_bilinear(const Image& img, Resolution target);

/// Nearest-neighbour downsample to `target` followed by bilinear upsample back
/// to the source resolution.
Image degrade(const Image& img, Resolution target);

/// Pixels of degrade(canvas, target) restricted to `roi` (canvas coordinates).
/// Reads only the canvas pixels the two resampling stages actually touch.
Image degrade_region(const CanvasView& src, Resolution target, Rect roi);

/// The 18 resolutions of the degradation ladder, in table order.
std::vector<Resolution> resolution_ladder();

/// Vertical extent of the lip landmarks of a closed-mouth shape (given in
/// native pixel coordinates), rescaled to the target resolution's height.
double resting_lip_height(const Shape& rest_shape, const std::vector<std::size_t>& lip_indices,
                          Resolution native, Resolution target);

// Frame ingestion.

/// Decodes a binary 8-bit PGM (P5).
Image read_pgm(const std::filesystem::path& path);
/// Decodes an 8-bit grayscale or RGB(A) PNG; colour is reduced to luma.
Image read_png(const std::filesystem::path& path);
/// Dispatches on extension (.pgm / .png).
Image read_image(const std::filesystem::path& path);

/// Writes an 8-bit P5 PGM, quantizing round(v * 255).
void write_pgm(const std::filesystem::path& path, const Image& img);

/// Loads every file in `directory` matching `pattern` (shell glob, e.g.
/// "*.pgm"), in lexicographic filename order.
std::vector<Image> load_frames(const std::filesystem::path& directory, const std::string& pattern);

/// Sorted list of files in `directory` matching the glob `pattern`.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& directory,
                                               const std::string& pattern);

/// Rounds v in [0,1] to the nearest 8-bit level and back (v -> round(255 v) / 255).
float quantize8(double v);

}  // namespace lipres
