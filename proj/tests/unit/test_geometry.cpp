#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "lipres/error.hpp"
#include "lipres/geometry.hpp"
#include "test_util.hpp"

using namespace lipres;

namespace {

Shape pentagon() { return Shape{{{0, 0}, {4, 0.5}, {5, 3}, {2, 5}, {-1, 2.5}}}; }

Shape random_shape(std::mt19937& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Shape s;
  for (int i = 0; i < n; ++i) s.points.push_back({g(rng), g(rng)});
  return s;
}

SimilarityTransform random_similarity(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {std::exp(u(rng)), 3.0 * u(rng), {10.0 * u(rng), 10.0 * u(rng)}};
}

double max_diff(const Shape& a, const Shape& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max({m, std::abs(a.points[i].x - b.points[i].x), std::abs(a.points[i].y - b.points[i].y)});
  return m;
}

}  // namespace

TEST_CASE("pts round trip") {
  TempDir dir;
  const Shape s = pentagon();
  write_pts(dir.path / "a.pts", s);
  CHECK(read_pts(dir.path / "a.pts") == s);
  std::ofstream(dir.path / "bad.pts") << "n_points: 3\n1 2\n";
  CHECK_THROWS_AS(read_pts(dir.path / "bad.pts"), Error);
}

TEST_CASE("similarity fit recovers a known transform") {
  const SimilarityTransform T{2.0, 0.5, {3, -1}};
  const Shape a = pentagon();
  const auto f = fit_similarity(a, T.apply(a));
  CHECK(f.scale == doctest::Approx(2.0));
  CHECK(f.rotation == doctest::Approx(0.5));
  CHECK(f.translation.x == doctest::Approx(3.0));
  CHECK(max_diff(T.inverse().apply(T.apply(a)), a) < 1e-12);
}

TEST_CASE("procrustes basics") {
  const Shape s = pentagon();
  const auto one = procrustes_align({s});
  REQUIRE(one.aligned.size() == 1);
  CHECK(max_diff(one.aligned[0], one.mean) < 1e-9);

  const SimilarityTransform T{2.0, M_PI / 6, {0, 0}};
  const auto two = procrustes_align({s, T.apply(s)});
  CHECK(max_diff(two.aligned[0], two.aligned[1]) < 1e-6);

  const auto tr = procrustes_align({s, SimilarityTransform{1, 0, {5, 7}}.apply(s)});
  CHECK(max_diff(tr.aligned[0], tr.aligned[1]) < 1e-9);
  CHECK(std::abs(tr.mean.centroid().x) < 1e-9);
  CHECK(std::abs(tr.mean.centroid().y) < 1e-9);

  CHECK_THROWS_AS(procrustes_align({s, Shape{{{0, 0}, {1, 1}, {2, 0}}}}), Error);
  CHECK_THROWS_AS(procrustes_align({Shape{{{1, 1}, {1, 1}, {1, 1}}}}), Error);
  CHECK_THROWS_AS(procrustes_align({}), Error);
}

TEST_CASE("procrustes mean normalization and similarity invariance") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Shape> shapes;
    const Shape base = random_shape(rng, 8);
    std::normal_distribution<double> g(0.0, 0.1);
    for (int i = 0; i < 6; ++i) {
      Shape s = base;
      for (auto& p : s.points) p = {p.x + g(rng), p.y + g(rng)};
      shapes.push_back(random_similarity(rng).apply(s));
    }
    const auto r = procrustes_align(shapes);
    const Point c = r.mean.centroid();
    CHECK(std::hypot(c.x, c.y) < 1e-9);
    double ss = 0.0;
    for (const auto& p : r.mean.points) ss += p.x * p.x + p.y * p.y;
    CHECK(std::sqrt(ss / r.mean.size()) == doctest::Approx(1.0).epsilon(1e-9));

    auto moved = shapes;
    for (auto& s : moved) s = random_similarity(rng).apply(s);
    const auto r2 = procrustes_align(moved);
    for (std::size_t i = 0; i < shapes.size(); ++i) CHECK(max_diff(r.aligned[i], r2.aligned[i]) < 1e-6);
  }
}

TEST_CASE("tangent normalization is exact for similarity-transformed shapes") {
  std::mt19937 rng(9);
  const Shape ref = procrustes_align({random_shape(rng, 6)}).mean;
  const Shape t = tangent_normalize(random_similarity(rng).apply(ref), ref);
  CHECK(max_diff(t, ref) < 1e-12);
}

TEST_CASE("triangulation") {
  CHECK(triangulate(Shape{{{0, 0}, {1, 0}, {0, 1}}}).triangles.size() == 1);
  const auto quad = triangulate(Shape{{{0, 0}, {3, 0}, {3.5, 2}, {0.2, 2.5}}});
  CHECK(quad.triangles.size() == 2);

  // Unit square is co-circular: both diagonals are Delaunay. Lexicographic
  // acceptance takes (0,1,2) first, so the diagonal is 0-2.
  const auto sq = triangulate(Shape{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}});
  REQUIRE(sq.triangles.size() == 2);
  for (const auto& t : sq.triangles) {
    const bool has0 = t[0] == 0 || t[1] == 0 || t[2] == 0;
    const bool has2 = t[0] == 2 || t[1] == 2 || t[2] == 2;
    CHECK((has0 && has2));
  }
  CHECK_THROWS_AS(triangulate(Shape{{{0, 0}, {1, 1}, {2, 2}}}), Error);

  // Every landmark used, Delaunay triangle count for points in general position.
  std::mt19937 rng(1);
  const Shape s = random_shape(rng, 12);
  const auto tri = triangulate(s);
  std::vector<int> used(12, 0);
  for (const auto& t : tri.triangles)
    for (auto v : t) used[v] = 1;
  for (int u : used) CHECK(u == 1);
}

TEST_CASE("reference frame mask excludes the outer boundary") {
  const Shape ref{{{0, 0}, {4, 0}, {0, 4}}};
  const auto frame = make_reference_frame(ref, triangulate(ref));
  // Strictly inside x>0, y>0, x+y<4: (1,1),(1,2),(2,1).
  CHECK(frame.size() == 3);
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const auto& b = frame.bary[k];
    CHECK(b[0] + b[1] + b[2] == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : b) CHECK(v >= -1e-9);
  }
}

TEST_CASE("warp_to_reference") {
  // Linear ramp image f(x,y) = (x + 2y) / 100.
  Image ramp(40, 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) ramp.at(x, y) = static_cast<float>((x + 2.0 * y) / 100.0);

  const Shape ref{{{2, 2}, {12, 2}, {2, 12}}};
  const Triangulation tri = triangulate(ref);
  const auto frame = make_reference_frame(ref, tri);

  SUBCASE("identity warp reproduces source pixels") {
    const auto t = warp_to_reference(ramp, ref, frame);
    for (std::size_t k = 0; k < frame.size(); ++k)
      CHECK(t.values[k] == ramp.at(static_cast<int>(frame.mask[k].x), static_cast<int>(frame.mask[k].y)));
  }
  SUBCASE("affine warp over a ramp") {
    const SimilarityTransform T{1.3, 0.2, {5, 4}};
    const Shape s = T.apply(ref);
    const auto t = warp_to_reference(ramp, s, ref, tri);
    for (std::size_t k = 0; k < frame.size(); ++k) {
      const Point q = T.apply(frame.mask[k]);
      CHECK(t.values[k] == doctest::Approx((q.x + 2 * q.y) / 100.0).epsilon(1e-5));
    }
  }
  SUBCASE("constant image gives constant texture") {
    const Image flat(40, 40, 0.6f);
    const auto t = warp_to_reference(flat, SimilarityTransform{0.7, 1.0, {20, 5}}.apply(ref), frame);
    for (Eigen::Index k = 0; k < t.values.size(); ++k) CHECK(t.values[k] == doctest::Approx(0.6));
  }
  CHECK_THROWS_AS(warp_to_reference(ramp, Shape{{{0, 0}, {1, 1}}}, frame), Error);
}
