#include "lipres/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "lipres/error.hpp"

namespace lipres {

namespace {

using cplx = std::complex<double>;

std::vector<cplx> to_complex(const Shape& s) {
  std::vector<cplx> z(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) z[i] = {s.points[i].x, s.points[i].y};
  return z;
}

Shape from_complex(const std::vector<cplx>& z) {
  Shape s;
  s.points.reserve(z.size());
  for (const auto& v : z) s.points.push_back({v.real(), v.imag()});
  return s;
}

std::vector<cplx> centered(std::vector<cplx> z) {
  cplx c = 0.0;
  for (const auto& v : z) c += v;
  c /= static_cast<double>(z.size());
  for (auto& v : z) v -= c;
  return z;
}

double squared_norm(const std::vector<cplx>& z) {
  double s = 0.0;
  for (const auto& v : z) s += std::norm(v);
  return s;
}

// Centroid (0,0), unit RMS radius.
std::vector<cplx> normalize_size(std::vector<cplx> z) {
  z = centered(std::move(z));
  const double rms = std::sqrt(squared_norm(z) / static_cast<double>(z.size()));
  for (auto& v : z) v /= rms;
  return z;
}

// Rotates a centered shape so its principal axis lies along x, then picks the
// half-turn whose first non-negligible odd third moment is positive.
std::vector<cplx> canonical_orientation(std::vector<cplx> z) {
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& v : z) {
    sxx += v.real() * v.real();
    syy += v.imag() * v.imag();
    sxy += v.real() * v.imag();
  }
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const cplx rot = std::polar(1.0, -theta);
  for (auto& v : z) v *= rot;

  double m[4] = {0, 0, 0, 0};  // x^3, y^3, x^2 y, x y^2
  for (const auto& v : z) {
    const double x = v.real(), y = v.imag();
    m[0] += x * x * x;
    m[1] += y * y * y;
    m[2] += x * x * y;
    m[3] += x * y * y;
  }
  const double tol = 1e-9 * static_cast<double>(z.size());
  for (double moment : m) {
    if (std::abs(moment) > tol) {
      if (moment < 0)
        for (auto& v : z) v = -v;
      break;
    }
  }
  return z;
}

// Least-squares similarity (complex factor a and offset t) with t + a*from ~ to.
std::pair<cplx, cplx> complex_similarity(const std::vector<cplx>& from, const std::vector<cplx>& to) {
  const std::size_t n = from.size();
  cplx cf = 0.0, ct = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cf += from[i];
    ct += to[i];
  }
  cf /= static_cast<double>(n);
  ct /= static_cast<double>(n);
  cplx num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += std::conj(from[i] - cf) * (to[i] - ct);
    den += std::norm(from[i] - cf);
  }
  if (den <= 0.0) throw Error("similarity fit: source shape has all points coincident");
  const cplx a = num / den;
  return {a, ct - a * cf};
}

void check_same_topology(const std::vector<Shape>& shapes) {
  if (shapes.empty()) throw Error("procrustes_align: no shapes");
  const std::size_t n = shapes.front().size();
  if (n < 3) throw Error("procrustes_align: shapes need at least 3 points");
  for (const auto& s : shapes) {
    if (s.size() != n) throw Error("procrustes_align: mismatched point counts");
    for (const auto& p : s.points)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("procrustes_align: non-finite coordinate");
    if (squared_norm(centered(to_complex(s))) <= 0.0)
      throw Error("procrustes_align: shape with all points coincident");
  }
}

double orient2d(Point a, Point b, Point c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

// > 0 when d lies inside the circumcircle of counter-clockwise (a, b, c).
double incircle(Point a, Point b, Point c, Point d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

// True when the interiors of two non-degenerate triangles intersect.
bool triangles_overlap(const std::array<Point, 3>& t1, const std::array<Point, 3>& t2, double eps) {
  auto separated_by_edges = [eps](const std::array<Point, 3>& a, const std::array<Point, 3>& b) {
    const double sign = orient2d(a[0], a[1], a[2]) > 0 ? 1.0 : -1.0;
    for (int e = 0; e < 3; ++e) {
      const Point p = a[e], q = a[(e + 1) % 3];
      bool all_outside = true;
      for (const Point& v : b) {
        if (sign * orient2d(p, q, v) > eps) {
          all_outside = false;
          break;
        }
      }
      if (all_outside) return true;
    }
    return false;
  };
  return !separated_by_edges(t1, t2) && !separated_by_edges(t2, t1);
}

}  // namespace

Point Shape::centroid() const {
  Point c;
  for (const auto& p : points) {
    c.x += p.x;
    c.y += p.y;
  }
  if (!points.empty()) {
    c.x /= static_cast<double>(points.size());
    c.y /= static_cast<double>(points.size());
  }
  return c;
}

Shape Shape::subset(const std::vector<std::size_t>& indices) const {
  Shape s;
  s.points.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= points.size()) throw Error("landmark index " + std::to_string(i) + " out of range");
    s.points.push_back(points[i]);
  }
  return s;
}

Shape read_pts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t count = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos || line.substr(0, colon).find("n_points") == std::string::npos)
      throw Error(path.string() + ": expected 'n_points: K' header");
    count = std::stoul(line.substr(colon + 1));
    have_header = true;
    break;
  }
  if (!have_header) throw Error(path.string() + ": empty landmark file");
  Shape s;
  while (s.points.size() < count && std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point p;
    if (!(ls >> p.x >> p.y)) throw Error(path.string() + ": malformed landmark line '" + line + "'");
    s.points.push_back(p);
  }
  if (s.points.size() != count) throw Error(path.string() + ": fewer landmarks than declared");
  return s;
}

void write_pts(const std::filesystem::path& path, const Shape& shape) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "n_points: " << shape.size() << '\n';
  out.precision(10);
  for (const auto& p : shape.points) out << p.x << ' ' << p.y << '\n';
}

Point SimilarityTransform::apply(Point p) const {
  const double c = scale * std::cos(rotation), s = scale * std::sin(rotation);
  return {c * p.x - s * p.y + translation.x, s * p.x + c * p.y + translation.y};
}

Shape SimilarityTransform::apply(const Shape& shape) const {
  Shape out;
  out.points.reserve(shape.size());
  for (const auto& p : shape.points) out.points.push_back(apply(p));
  return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = -rotation;
  const Point t = inv.apply(translation);
  inv.translation = {-t.x, -t.y};
  return inv;
}

SimilarityTransform fit_similarity(const Shape& from, const Shape& to) {
  if (from.size() != to.size() || from.size() == 0) throw Error("fit_similarity: point count mismatch");
  const auto [a, t] = complex_similarity(to_complex(from), to_complex(to));
  return {std::abs(a), std::arg(a), {t.real(), t.imag()}};
}

ProcrustesResult procrustes_align(const std::vector<Shape>& shapes) {
  check_same_topology(shapes);
  std::vector<std::vector<cplx>> zs;
  zs.reserve(shapes.size());
  for (const auto& s : shapes) zs.push_back(to_complex(s));

  auto align_all = [&](const std::vector<cplx>& mean) {
    std::vector<std::vector<cplx>> out;
    out.reserve(zs.size());
    for (const auto& z : zs) {
      const auto [a, t] = complex_similarity(z, mean);
      std::vector<cplx> w(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) w[i] = a * z[i] + t;
      out.push_back(std::move(w));
    }
    return out;
  };

  std::vector<cplx> mean = canonical_orientation(normalize_size(zs.front()));
  int iter = 0;
  for (; iter < 100; ++iter) {
    const auto aligned = align_all(mean);
    std::vector<cplx> next(mean.size(), 0.0);
    for (const auto& w : aligned)
      for (std::size_t i = 0; i < w.size(); ++i) next[i] += w[i];
    for (auto& v : next) v /= static_cast<double>(aligned.size());
    next = canonical_orientation(normalize_size(std::move(next)));
    double moved = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) moved = std::max(moved, std::abs(next[i] - mean[i]));
    mean = std::move(next);
    if (moved < 1e-8) {
      ++iter;
      break;
    }
  }

  ProcrustesResult r;
  r.mean = from_complex(mean);
  for (const auto& w : align_all(mean)) r.aligned.push_back(from_complex(w));
  r.iterations = iter;
  return r;
}

Shape tangent_normalize(const Shape& shape, const Shape& reference) {
  if (shape.size() != reference.size()) throw Error("tangent_normalize: point count mismatch");
  const auto z = centered(to_complex(shape));
  const auto r = to_complex(reference);
  cplx proj = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) proj += std::conj(r[i]) * z[i];
  if (std::abs(proj) == 0.0) throw Error("tangent_normalize: shape orthogonal to reference");
  const cplx c = squared_norm(r) / proj;
  std::vector<cplx> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = c * z[i];
  return from_complex(out);
}

Triangulation triangulate(const Shape& reference) {
  const auto& P = reference.points;
  const std::size_t n = P.size();
  if (n < 3) throw Error("triangulate: need at least 3 points");
  double xmin = P[0].x, xmax = P[0].x, ymin = P[0].y, ymax = P[0].y;
  for (const auto& p : P) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double L = std::max({xmax - xmin, ymax - ymin, 1e-300});
  const double area_eps = 1e-12 * L * L;
  const double circle_eps = 1e-10 * L * L * L * L;

  // Candidates in lexicographic (i < j < k) order.
  std::vector<std::array<std::size_t, 3>> candidates;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        const double o = orient2d(P[i], P[j], P[k]);
        if (std::abs(o) <= area_eps) continue;
        const Point a = P[i];
        const Point b = o > 0 ? P[j] : P[k];
        const Point c = o > 0 ? P[k] : P[j];
        bool empty = true;
        for (std::size_t m = 0; m < n && empty; ++m) {
          if (m == i || m == j || m == k) continue;
          if (incircle(a, b, c, P[m]) > circle_eps) empty = false;
        }
        if (empty) candidates.push_back({i, j, k});
      }
  if (candidates.empty()) throw Error("triangulate: all points collinear");

  Triangulation tri;
  std::vector<std::array<Point, 3>> accepted;
  for (const auto& t : candidates) {
    const std::array<Point, 3> pts{P[t[0]], P[t[1]], P[t[2]]};
    bool clash = false;
    for (const auto& other : accepted)
      if (triangles_overlap(pts, other, area_eps)) {
        clash = true;
        break;
      }
    if (clash) continue;
    accepted.push_back(pts);
    tri.triangles.push_back(t);
  }

  std::vector<bool> used(n, false);
  for (const auto& t : tri.triangles)
    for (std::size_t v : t) used[v] = true;
  for (std::size_t i = 0; i < n; ++i)
    if (!used[i]) throw Error("triangulate: landmark " + std::to_string(i) + " not covered (duplicate point?)");
  return tri;
}

std::array<double, 3> barycentric(Point p, Point a, Point b, Point c) {
  const double det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
  if (det == 0.0) throw Error("barycentric: degenerate triangle");
  const double l1 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det;
  const double l2 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det;
  return {l1, l2, 1.0 - l1 - l2};
}

Point ReferenceFrame::map(const Shape& shape, std::size_t k) const {
  const auto& t = mesh.triangles[triangle_of[k]];
  const auto& b = bary[k];
  const Point& p0 = shape.points[t[0]];
  const Point& p1 = shape.points[t[1]];
  const Point& p2 = shape.points[t[2]];
  return {b[0] * p0.x + b[1] * p1.x + b[2] * p2.x, b[0] * p0.y + b[1] * p1.y + b[2] * p2.y};
}

ReferenceFrame make_reference_frame(const Shape& reference, const Triangulation& mesh) {
  ReferenceFrame f;
  f.reference = reference;
  f.mesh = mesh;
  const auto& P = reference.points;
  for (const auto& t : mesh.triangles) {
    for (std::size_t v : t)
      if (v >= P.size()) throw Error("triangulation index out of range");
    const double o = orient2d(P[t[0]], P[t[1]], P[t[2]]);
    if (std::abs(o) < 1e-12) throw Error("degenerate triangle in reference mesh");
  }

  // Edges used by exactly one triangle form the outer boundary.
  std::map<std::pair<std::size_t, std::size_t>, int> edge_use;
  auto key = [](std::size_t a, std::size_t b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) ++edge_use[key(t[e], t[(e + 1) % 3])];

  const double tol = 1e-9;
  std::vector<std::array<int, 4>> boxes;  // per triangle integer bbox
  for (const auto& t : mesh.triangles) {
    double x0 = P[t[0]].x, x1 = x0, y0 = P[t[0]].y, y1 = y0;
    for (std::size_t v : t) {
      x0 = std::min(x0, P[v].x);
      x1 = std::max(x1, P[v].x);
      y0 = std::min(y0, P[v].y);
      y1 = std::max(y1, P[v].y);
    }
    boxes.push_back({static_cast<int>(std::ceil(x0 - tol)), static_cast<int>(std::floor(x1 + tol)),
                     static_cast<int>(std::ceil(y0 - tol)), static_cast<int>(std::floor(y1 + tol))});
  }
  int gx0 = std::numeric_limits<int>::max(), gx1 = std::numeric_limits<int>::min();
  int gy0 = gx0, gy1 = gx1;
  for (const auto& b : boxes) {
    gx0 = std::min(gx0, b[0]);
    gx1 = std::max(gx1, b[1]);
    gy0 = std::min(gy0, b[2]);
    gy1 = std::max(gy1, b[3]);
  }

  for (int y = gy0; y <= gy1; ++y)
    for (int x = gx0; x <= gx1; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      std::ptrdiff_t found = -1;
      std::array<double, 3> found_bary{};
      bool on_boundary = false;
      for (std::size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
        const auto& b = boxes[ti];
        if (x < b[0] || x > b[1] || y < b[2] || y > b[3]) continue;
        const auto& t = mesh.triangles[ti];
        const auto l = barycentric(p, P[t[0]], P[t[1]], P[t[2]]);
        if (l[0] < -tol || l[1] < -tol || l[2] < -tol) continue;
        // Zero coordinate for vertex v means p lies on the edge opposite v.
        for (int v = 0; v < 3; ++v)
          if (std::abs(l[v]) <= tol && edge_use[key(t[(v + 1) % 3], t[(v + 2) % 3])] == 1) on_boundary = true;
        if (found < 0) {
          found = static_cast<std::ptrdiff_t>(ti);
          found_bary = l;
        }
      }
      if (found < 0 || on_boundary) continue;
      for (auto& v : found_bary) v = std::max(v, 0.0);
      const double s = found_bary[0] + found_bary[1] + found_bary[2];
      for (auto& v : found_bary) v /= s;
      f.mask.push_back(p);
      f.triangle_of.push_back(static_cast<std::size_t>(found));
      f.bary.push_back(found_bary);
    }
  if (f.mask.empty()) throw Error("reference mesh contains no pixel centers");
  return f;
}

namespace {

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

TextureVector warp_to_reference(const Image& window, int x0, int y0, const Shape& shape,
                                const ReferenceFrame& frame) {
  if (shape.size() != frame.reference.size()) throw Error("warp_to_reference: shape/reference topology mismatch");
  TextureVector t;
  t.values.resize(static_cast<Eigen::Index>(frame.size()));
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const Point q = frame.map(shape, k);
    t.values[static_cast<Eigen::Index>(k)] = window.sample(snap(q.x) - x0, snap(q.y) - y0);
  }
  return t;
}

TextureVector warp_to_reference(const Image& img, const Shape& shape, const ReferenceFrame& frame) {
  return warp_to_reference(img, 0, 0, shape, frame);
}

TextureVector warp_to_reference(const Image& img, const Shape& shape, const Shape& reference,
                                const Triangulation& tri) {
  return warp_to_reference(img, shape, make_reference_frame(reference, tri));
}

Eigen::VectorXd to_vector(const Shape& s) {
  Eigen::VectorXd v(2 * static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    v[2 * static_cast<Eigen::Index>(i)] = s.points[i].x;
    v[2 * static_cast<Eigen::Index>(i) + 1] = s.points[i].y;
  }
  return v;
}

Shape from_vector(const Eigen::VectorXd& v) {
  Shape s;
  s.points.resize(static_cast<std::size_t>(v.size() / 2));
  for (std::size_t i = 0; i < s.points.size(); ++i)
    s.points[i] = {v[2 * static_cast<Eigen::Index>(i)], v[2 * static_cast<Eigen::Index>(i) + 1]};
  return s;
}

}  // namespace lipres
