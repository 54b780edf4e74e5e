#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace lipres {

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

/// Ordered landmark set; the index of a point is its identity in the model topology.
struct Shape {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  Point centroid() const;
  Shape subset(const std::vector<std::size_t>& indices) const;

  bool operator==(const Shape&) const = default;
};

/// Reads the plain-text landmark format: `n_points: K` followed by K lines `x y`.
Shape read_pts(const std::filesystem::path& path);
void write_pts(const std::filesystem::path& path, const Shape& shape);

}  // namespace lipres
