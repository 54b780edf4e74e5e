#include <algorithm>
#include <cmath>

#include "lipres/aam.hpp"
#include "lipres/error.hpp"

namespace lipres {

namespace {

// Accepts either a shape in the model's own topology or one in the source
// landmark set the model was cut from.
Shape model_shape(const Aam& aam, const Shape& shape) {
  if (shape.size() == aam.n_points()) return shape;
  if (!aam.landmarks.empty() && *std::max_element(aam.landmarks.begin(), aam.landmarks.end()) < shape.size())
    return shape.subset(aam.landmarks);
  throw Error("features: shape has " + std::to_string(shape.size()) + " points, model expects " +
              std::to_string(aam.n_points()));
}

// Canvas region the warp can read for this shape: its bounding box plus the
// bilinear footprint.
Rect shape_roi(const Shape& s, Resolution canvas) {
  double x0 = s.points[0].x, x1 = x0, y0 = s.points[0].y, y1 = y0;
  for (const auto& p : s.points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const int ix0 = std::clamp(static_cast<int>(std::floor(x0)) - 2, 0, canvas.width - 1);
  const int iy0 = std::clamp(static_cast<int>(std::floor(y0)) - 2, 0, canvas.height - 1);
  const int ix1 = std::clamp(static_cast<int>(std::ceil(x1)) + 2, 0, canvas.width - 1);
  const int iy1 = std::clamp(static_cast<int>(std::ceil(y1)) + 2, 0, canvas.height - 1);
  return {ix0, iy0, ix1 - ix0 + 1, iy1 - iy0 + 1};
}

}  // namespace

ResolutionFeatureExtractor::ResolutionFeatureExtractor(const Aam& aam, const std::vector<LabelledFrame>& key_frames,
                                                       Resolution target, AppearanceBasis basis)
    : aam_(&aam), target_(target) {
  if (target.width < 1 || target.height < 1) throw Error("features: invalid target resolution");
  if (basis == AppearanceBasis::native || target == aam.native_resolution) {
    basis_ = aam.appearance_model.basis;
    return;
  }
  if (key_frames.size() < 2) throw Error("features: need at least 2 key frames for a per-resolution basis");
  const auto& ref = aam.appearance_model.frame;
  Eigen::MatrixXd data(static_cast<Eigen::Index>(ref.size()), static_cast<Eigen::Index>(key_frames.size()));
  for (std::size_t i = 0; i < key_frames.size(); ++i)
    data.col(static_cast<Eigen::Index>(i)) =
        degraded_texture(key_frames[i].frame, model_shape(aam, key_frames[i].shape)).values;
  PcaOptions opt;
  opt.mode_count = aam.appearance_model.basis.size();
  opt.completion = &aam.appearance_model.basis.modes;
  basis_ = pca(data, opt);
}

TextureVector ResolutionFeatureExtractor::degraded_texture(const Frame& frame, const Shape& shape) const {
  const auto& ref = aam_->appearance_model.frame;
  if (target_ == frame.canvas) return warp_to_reference(frame.window, frame.x0, frame.y0, shape, ref);
  const Rect roi = shape_roi(shape, frame.canvas);
  const Image patch = degrade_region(frame.view(), target_, roi);
  return warp_to_reference(patch, roi.x, roi.y, shape, ref);
}

Eigen::VectorXd ResolutionFeatureExtractor::appearance(const Frame& frame, const Shape& fitted_shape) const {
  return basis_.project(degraded_texture(frame, model_shape(*aam_, fitted_shape)).values);
}

FeatureVector ResolutionFeatureExtractor::extract(const Frame& frame, const Shape& fitted_shape) const {
  return {shape_features(*aam_, fitted_shape), appearance(frame, fitted_shape)};
}

Eigen::VectorXd shape_features(const Aam& aam, const Shape& fitted_shape) {
  return aam.shape_model.project(model_shape(aam, fitted_shape));
}

std::vector<FeatureVector> features_for_sequence(const Aam& aam, const std::vector<LabelledFrame>& key_frames,
                                                 const std::vector<Frame>& frames,
                                                 const std::vector<Shape>& fitted_shapes, Resolution target,
                                                 AppearanceBasis basis) {
  if (frames.size() != fitted_shapes.size())
    throw Error("features_for_sequence: " + std::to_string(frames.size()) + " frames but " +
                std::to_string(fitted_shapes.size()) + " fitted shapes");
  const ResolutionFeatureExtractor ex(aam, key_frames, target, basis);
  std::vector<FeatureVector> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) out.push_back(ex.extract(frames[i], fitted_shapes[i]));
  return out;
}

}  // namespace lipres
