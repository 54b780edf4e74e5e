#include "lipres/aam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "lipres/error.hpp"
#include "reference_image.hpp"

namespace lipres {

namespace {

Shape model_points(const std::vector<std::size_t>& landmarks, const Shape& source) {
  return landmarks.empty() ? source : source.subset(landmarks);
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  const double t = len2 > 0 ? std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy);
}

double rms_radius(const Shape& s) {
  const Point c = s.centroid();
  double sum = 0.0;
  for (const auto& p : s.points) sum += (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
  return std::sqrt(sum / static_cast<double>(s.size()));
}

}  // namespace

Eigen::VectorXd ShapeModel::project(const Shape& shape) const {
  return basis.project(to_vector(tangent_normalize(shape, alignment_reference)));
}

Shape ShapeModel::instance(const Eigen::VectorXd& params) const { return from_vector(basis.reconstruct(params)); }

ShapeModel build_shape_model(const std::vector<Shape>& shapes, double retain) {
  if (shapes.size() < 2) throw Error("build_shape_model: need at least 2 shapes");
  const ProcrustesResult proc = procrustes_align(shapes);
  const Eigen::Index dim = 2 * static_cast<Eigen::Index>(proc.mean.size());
  Eigen::MatrixXd data(dim, static_cast<Eigen::Index>(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i)
    data.col(static_cast<Eigen::Index>(i)) = to_vector(tangent_normalize(shapes[i], proc.mean));

  ShapeModel m;
  m.alignment_reference = proc.mean;
  PcaOptions opt;
  opt.retain = retain;
  m.basis = pca(data, opt);
  // Identical shapes leave only round-off in the tangent space.
  if (m.basis.total_variance < 1e-20 * static_cast<double>(dim)) throw Error("no variance");
  m.mean = from_vector(m.basis.mean);
  return m;
}

AppearanceModel build_appearance_model(const std::vector<LabelledFrame>& frames, const ReferenceFrame& reference,
                                       double retain) {
  if (frames.size() < 2) throw Error("build_appearance_model: need at least 2 frames");
  Eigen::MatrixXd data(static_cast<Eigen::Index>(reference.size()), static_cast<Eigen::Index>(frames.size()));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    data.col(static_cast<Eigen::Index>(i)) =
        warp_to_reference(f.frame.window, f.frame.x0, f.frame.y0, f.shape, reference).values;
  }
  AppearanceModel m;
  m.frame = reference;
  PcaOptions opt;
  opt.retain = retain;
  m.basis = pca(data, opt);
  if (m.basis.total_variance < 1e-20 * static_cast<double>(data.rows())) throw Error("no variance");
  return m;
}

Aam build_aam(const std::vector<LabelledFrame>& training, const AamOptions& options,
              const std::vector<std::size_t>& landmarks) {
  if (training.size() < 2) throw Error("build_aam: need at least 2 training frames");
  if (!landmarks.empty() && landmarks.size() < 3) throw Error("build_aam: need at least 3 landmarks");

  std::vector<Shape> shapes;
  std::vector<LabelledFrame> local;
  for (const auto& t : training) {
    shapes.push_back(model_points(landmarks, t.shape));
    local.push_back({t.frame, shapes.back()});
  }

  Aam aam;
  aam.landmarks = landmarks;
  aam.native_resolution = training.front().frame.canvas;
  aam.shape_model = build_shape_model(shapes, options.shape_retain);

  double size = 0.0;
  for (const auto& s : shapes) size += rms_radius(s);
  size /= static_cast<double>(shapes.size());
  const Shape& mean = aam.shape_model.mean;
  const double mean_size = rms_radius(mean);

  SimilarityTransform T;
  T.scale = options.reference_scale * size / mean_size;
  T.rotation = fit_similarity(mean, shapes.front()).rotation;
  T.translation = {0.0, 0.0};
  Shape ref = T.apply(mean);
  double xmin = ref.points[0].x, ymin = ref.points[0].y;
  for (const auto& p : ref.points) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
  }
  T.translation = {2.0 - xmin, 2.0 - ymin};
  aam.to_reference = T;
  aam.reference_shape = T.apply(mean);
  aam.triangulation = triangulate(aam.reference_shape);
  const ReferenceFrame frame = make_reference_frame(aam.reference_shape, aam.triangulation);
  aam.appearance_model = build_appearance_model(local, frame, options.appearance_retain);
  return aam;
}

Aam extract_sub_model(const Aam& aam, const std::vector<std::size_t>& landmark_indices,
                      const std::vector<LabelledFrame>& training, const AamOptions& options) {
  if (landmark_indices.size() < 3) throw Error("extract_sub_model: need at least 3 landmarks");
  std::vector<std::size_t> source;
  for (std::size_t i : landmark_indices) {
    if (i >= aam.n_points()) throw Error("extract_sub_model: landmark index out of range");
    source.push_back(aam.landmarks.empty() ? i : aam.landmarks[i]);
  }
  return build_aam(training, options, source);
}

Image render_model_instance(const Aam& aam, const Shape& image_shape, const Eigen::VectorXd& appearance_params,
                            Resolution canvas, float background) {
  if (image_shape.size() != aam.n_points()) throw Error("render_model_instance: topology mismatch");
  const auto& app = aam.appearance_model;
  const detail::ReferenceImage tex(app.frame, app.basis.reconstruct(appearance_params));
  Image out(canvas.width, canvas.height, background);
  const auto& P = image_shape.points;
  const auto& R = aam.reference_shape.points;
  const auto& tris = aam.triangulation.triangles;
  // Pixels up to kApron outside the mesh continue the nearest triangle's
  // mapping, so bilinear lookups at the mesh edge never mix in background.
  constexpr double kApron = 2.0;
  double bx0 = P[0].x, bx1 = bx0, by0 = P[0].y, by1 = by0;
  for (const auto& p : P) {
    bx0 = std::min(bx0, p.x);
    bx1 = std::max(bx1, p.x);
    by0 = std::min(by0, p.y);
    by1 = std::max(by1, p.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(bx0 - kApron)));
  const int x1 = std::min(canvas.width - 1, static_cast<int>(std::ceil(bx1 + kApron)));
  const int y0 = std::max(0, static_cast<int>(std::floor(by0 - kApron)));
  const int y1 = std::min(canvas.height - 1, static_cast<int>(std::ceil(by1 + kApron)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Point q{double(x), double(y)};
      double best = kApron + 1e-9;
      std::array<double, 3> best_l{};
      std::size_t best_t = tris.size();
      for (std::size_t ti = 0; ti < tris.size() && best > 0.0; ++ti) {
        const auto& t = tris[ti];
        const Point a = P[t[0]], b = P[t[1]], c = P[t[2]];
        if (std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)) < 1e-12) continue;
        const auto l = barycentric(q, a, b, c);
        double d = 0.0;
        if (l[0] < -1e-9 || l[1] < -1e-9 || l[2] < -1e-9) {
          d = std::numeric_limits<double>::infinity();
          for (int e = 0; e < 3; ++e) d = std::min(d, segment_distance(q, P[t[e]], P[t[(e + 1) % 3]]));
        }
        if (d < best) {
          best = d;
          best_l = l;
          best_t = ti;
        }
      }
      if (best_t == tris.size()) continue;
      const auto& t = tris[best_t];
      const auto& l = best_l;
      const double rx = l[0] * R[t[0]].x + l[1] * R[t[1]].x + l[2] * R[t[2]].x;
      const double ry = l[0] * R[t[0]].y + l[1] * R[t[1]].y + l[2] * R[t[2]].y;
      out.at(x, y) = static_cast<float>(std::clamp(tex.sample_cubic(rx, ry), 0.0, 1.0));
    }
  return out;
}

// --- storage ---------------------------------------------------------------

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Eigen::MatrixXd& m) {
  json cols = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) cols.push_back(vec_json(m.col(c)));
  return {{"rows", m.rows()}, {"cols", cols}};
}

Eigen::MatrixXd json_mat(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto& cols = j.at("cols");
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = json_vec(cols[c]);
  return m;
}

json shape_json(const Shape& s) {
  json a = json::array();
  for (const auto& p : s.points) a.push_back({p.x, p.y});
  return a;
}

Shape json_shape(const json& j) {
  Shape s;
  for (const auto& p : j) s.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return s;
}

json pca_json(const PcaBasis& b) {
  return {{"mean", vec_json(b.mean)},
          {"modes", mat_json(b.modes)},
          {"eigenvalues", vec_json(b.eigenvalues)},
          {"total_variance", b.total_variance}};
}

PcaBasis json_pca(const json& j) {
  PcaBasis b;
  b.mean = json_vec(j.at("mean"));
  b.modes = json_mat(j.at("modes"));
  b.eigenvalues = json_vec(j.at("eigenvalues"));
  b.total_variance = j.at("total_variance").get<double>();
  return b;
}

constexpr int kAamFormatVersion = 1;

}  // namespace

void save_aam(const std::filesystem::path& path, const Aam& aam) {
  json tris = json::array();
  for (const auto& t : aam.triangulation.triangles) tris.push_back({t[0], t[1], t[2]});
  json j = {
      {"format", "lipres-aam"},
      {"version", kAamFormatVersion},
      {"native_resolution", {aam.native_resolution.width, aam.native_resolution.height}},
      {"landmarks", aam.landmarks},
      {"reference_shape", shape_json(aam.reference_shape)},
      {"to_reference",
       {{"scale", aam.to_reference.scale},
        {"rotation", aam.to_reference.rotation},
        {"translation", {aam.to_reference.translation.x, aam.to_reference.translation.y}}}},
      {"triangles", tris},
      {"shape_model",
       {{"mean", shape_json(aam.shape_model.mean)},
        {"alignment_reference", shape_json(aam.shape_model.alignment_reference)},
        {"basis", pca_json(aam.shape_model.basis)}}},
      {"appearance_model", {{"mask_size", aam.appearance_model.frame.size()}, {"basis", pca_json(aam.appearance_model.basis)}}},
  };
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Aam load_aam(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "lipres-aam") throw Error(path.string() + ": not an AAM model file");
  if (j.value("version", 0) != kAamFormatVersion)
    throw Error(path.string() + ": unsupported model version " + std::to_string(j.value("version", 0)));
  Aam aam;
  aam.native_resolution = {j["native_resolution"][0].get<int>(), j["native_resolution"][1].get<int>()};
  aam.landmarks = j["landmarks"].get<std::vector<std::size_t>>();
  aam.reference_shape = json_shape(j["reference_shape"]);
  const auto& tr = j["to_reference"];
  aam.to_reference = {tr["scale"].get<double>(), tr["rotation"].get<double>(),
                      {tr["translation"][0].get<double>(), tr["translation"][1].get<double>()}};
  for (const auto& t : j["triangles"])
    aam.triangulation.triangles.push_back({t[0].get<std::size_t>(), t[1].get<std::size_t>(), t[2].get<std::size_t>()});
  aam.shape_model.mean = json_shape(j["shape_model"]["mean"]);
  aam.shape_model.alignment_reference = json_shape(j["shape_model"]["alignment_reference"]);
  aam.shape_model.basis = json_pca(j["shape_model"]["basis"]);
  aam.appearance_model.frame = make_reference_frame(aam.reference_shape, aam.triangulation);
  aam.appearance_model.basis = json_pca(j["appearance_model"]["basis"]);
  if (aam.appearance_model.frame.size() != j["appearance_model"]["mask_size"].get<std::size_t>() ||
      aam.appearance_model.basis.mean.size() != static_cast<Eigen::Index>(aam.appearance_model.frame.size()))
    throw Error(path.string() + ": appearance mask does not match the stored mesh");
  return aam;
}

}  // namespace lipres
