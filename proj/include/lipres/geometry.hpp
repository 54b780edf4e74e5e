#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "lipres/imaging.hpp"
#include "lipres/shape.hpp"

namespace lipres {

/// x' = scale * R(rotation) * x + translation.
struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;
  Point translation;

  Point apply(Point p) const;
  Shape apply(const Shape& s) const;
  SimilarityTransform inverse() const;
};

/// Least-squares similarity mapping `from` onto `to` (same point count).
SimilarityTransform fit_similarity(const Shape& from, const Shape& to);

struct ProcrustesResult {
  std::vector<Shape> aligned;
  Shape mean;
  int iterations = 0;
};

/// Generalized Procrustes analysis. The mean is normalized to centroid (0,0),
/// unit RMS radius and a canonical orientation derived from its own geometry
/// (principal axis along x, sign fixed by third moments), so the result does
/// not depend on the pose of any input shape.
ProcrustesResult procrustes_align(const std::vector<Shape>& shapes);

/// Rotates/scales/translates `shape` into the tangent space of `reference`:
/// centroid removed, then the complex factor c chosen so that
/// <c x, reference> = |reference|^2 and <c x, rot90(reference)> = 0.
/// Shapes of the form T(reference + d) with d orthogonal to the similarity
/// directions of `reference` map exactly to reference + d.
Shape tangent_normalize(const Shape& shape, const Shape& reference);

struct Triangulation {
  std::vector<std::array<std::size_t, 3>> triangles;
};

/// Delaunay triangulation by empty-circumcircle enumeration. Co-circular
/// configurations are resolved by accepting candidate triangles in
/// lexicographic index order and skipping any that overlap one already taken.
Triangulation triangulate(const Shape& reference);

/// Barycentric coordinates of p in triangle (a, b, c).
std::array<double, 3> barycentric(Point p, Point a, Point b, Point c);

/// Integer pixel positions inside a reference mesh with their fixed
/// triangle/barycentric coordinates.
struct ReferenceFrame {
  Shape reference;
  Triangulation mesh;
  std::vector<Point> mask;                       // pixel centers (integer coordinates)
  std::vector<std::size_t> triangle_of;          // per mask pixel
  std::vector<std::array<double, 3>> bary;       // per mask pixel

  std::size_t size() const { return mask.size(); }

  /// Position in the frame of `shape` that mask pixel k maps to.
  Point map(const Shape& shape, std::size_t k) const;
};

/// Builds the mask of integer pixel centers strictly inside the mesh (points on
/// the outer boundary excluded). Throws on a degenerate reference triangle.
ReferenceFrame make_reference_frame(const Shape& reference, const Triangulation& mesh);

struct TextureVector {
  Eigen::VectorXd values;  // one per mask pixel
};

/// Samples `img` (bilinear, edge-clamped) at every mask pixel mapped through
/// the piecewise-affine warp from the reference mesh onto `shape`.
TextureVector warp_to_reference(const Image& img, const Shape& shape, const ReferenceFrame& frame);

/// As above, for an image window positioned at (x0, y0) within a larger canvas.
TextureVector warp_to_reference(const Image& window, int x0, int y0, const Shape& shape,
                                const ReferenceFrame& frame);

/// Convenience overload that builds the reference frame on the fly.
TextureVector warp_to_reference(const Image& img, const Shape& shape, const Shape& reference,
                                const Triangulation& tri);

/// Shape <-> stacked coordinate vector (x0, y0, x1, y1, ...).
Eigen::VectorXd to_vector(const Shape& s);
Shape from_vector(const Eigen::VectorXd& v);

}  // namespace lipres
