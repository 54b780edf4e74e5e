#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lipres/geometry.hpp"
#include "lipres/imaging.hpp"

namespace lipres {

/// Principal components of a sample set (columns of the data matrix).
struct PcaBasis {
  Eigen::VectorXd mean;
  Eigen::MatrixXd modes;        // orthonormal columns, one per retained mode
  Eigen::VectorXd eigenvalues;  // retained, descending
  double total_variance = 0.0;  // over all modes

  Eigen::Index size() const { return modes.cols(); }
  double retained_fraction() const;
  Eigen::VectorXd project(const Eigen::VectorXd& x) const { return modes.transpose() * (x - mean); }
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& params) const { return mean + modes * params; }
};

struct PcaOptions {
  double retain = 0.95;
  /// Keep exactly this many modes instead of applying the retention rule.
  std::optional<Eigen::Index> mode_count;
  /// With mode_count set, allow zero-variance data; missing modes are then
  /// taken from `completion` (orthogonalized against the data modes).
  const Eigen::MatrixXd* completion = nullptr;
};

/// PCA of the columns of `samples` (dimension x count). Uses the Gram matrix
/// when there are fewer samples than dimensions. Eigenvector signs make the
/// largest-magnitude component positive.
PcaBasis pca(const Eigen::MatrixXd& samples, const PcaOptions& options);

struct ShapeModel {
  Shape mean;                 // PCA center of the tangent-projected shapes
  Shape alignment_reference;  // Procrustes mean the shapes are normalized against
  PcaBasis basis;             // over stacked (x, y) coordinates in the normalized frame

  Eigen::Index size() const { return basis.size(); }
  /// Pose-free parameters of a shape given in any frame.
  Eigen::VectorXd project(const Shape& shape) const;
  Shape instance(const Eigen::VectorXd& params) const;
};

/// Procrustes alignment, tangent projection and PCA. Throws "no variance"
/// when the shapes are identical up to similarity.
ShapeModel build_shape_model(const std::vector<Shape>& shapes, double retain);

/// A training frame with its labelled landmarks (image coordinates).
struct LabelledFrame {
  Frame frame;
  Shape shape;
};

struct AppearanceModel {
  ReferenceFrame frame;
  PcaBasis basis;  // over mask pixels

  Eigen::Index size() const { return basis.size(); }
};

AppearanceModel build_appearance_model(const std::vector<LabelledFrame>& frames, const ReferenceFrame& reference,
                                       double retain);

struct Aam {
  ShapeModel shape_model;
  AppearanceModel appearance_model;
  Triangulation triangulation;
  Shape reference_shape;              // mean shape in reference-frame pixels
  SimilarityTransform to_reference;   // normalized model frame -> reference pixels
  Resolution native_resolution;
  std::vector<std::size_t> landmarks; // indices into the source landmark set

  std::size_t n_points() const { return reference_shape.size(); }
};

struct AamOptions {
  double shape_retain = 0.95;
  double appearance_retain = 0.95;
  /// Reference frame size relative to the mean training-shape size.
  double reference_scale = 1.0;
};

/// Builds shape model, Delaunay mesh on the reference shape, and appearance
/// model from labelled key frames. `landmarks` selects a subset of each
/// frame's points (empty = all).
Aam build_aam(const std::vector<LabelledFrame>& training, const AamOptions& options,
              const std::vector<std::size_t>& landmarks = {});

/// Rebuilds shape and appearance models restricted to `landmark_indices`
/// (indices into `aam`'s own point list) from the same training frames.
Aam extract_sub_model(const Aam& aam, const std::vector<std::size_t>& landmark_indices,
                      const std::vector<LabelledFrame>& training, const AamOptions& options);

/// Renders a model instance into a canvas: each pixel inside the warped mesh
/// takes the reference-frame appearance (bicubic) at its back-mapped position. A 2 px
/// apron outside the mesh extends the nearest triangle's mapping.
Image render_model_instance(const Aam& aam, const Shape& image_shape, const Eigen::VectorXd& appearance_params,
                            Resolution canvas, float background);

// --- Fitting ---------------------------------------------------------------

struct FitResult {
  Eigen::VectorXd shape_params;
  Eigen::VectorXd appearance_params;
  Shape fitted_shape;
  double residual_rms = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;  // projected residual RMS per evaluated iterate
};

/// Project-out inverse-compositional fitting. Warp parameters are four
/// similarity coefficients followed by the shape coefficients, both over
/// orthonormal bases of the reference shape.
class Fitter {
 public:
  explicit Fitter(const Aam& aam);

  FitResult fit(const Frame& frame, const Shape& init_shape, int max_iters, double tol) const;
  FitResult fit(const Image& image, const Shape& init_shape, int max_iters, double tol) const {
    return fit(Frame::whole(image), init_shape, max_iters, tol);
  }

  Eigen::Index n_params() const { return 4 + shape_basis_.cols(); }
  /// Landmarks for warp parameters.
  Shape shape_for(const Eigen::VectorXd& params) const;
  /// Warp parameters whose landmarks best match `shape` (exact when representable).
  Eigen::VectorXd params_for(const Shape& shape) const;
  /// Image position of mask pixel k and its derivative w.r.t. the parameters.
  Point warp_point(std::size_t k, const Eigen::VectorXd& params) const;
  Eigen::Matrix<double, 2, Eigen::Dynamic> warp_jacobian(std::size_t k, const Eigen::VectorXd& params) const;

 private:
  Eigen::VectorXd compose_inverse(const Eigen::VectorXd& params, const Eigen::VectorXd& delta) const;

  const Aam* aam_;
  Eigen::VectorXd base_;         // reference shape, stacked
  Point center_;
  double sim_norm_ = 1.0;        // |s0 - c0|
  double n_sqrt_ = 1.0;          // sqrt(n_points)
  Eigen::MatrixXd shape_basis_;  // 2n x s, orthonormal, orthogonal to similarity
  Eigen::MatrixXd sd_;           // K x (4+s) projected steepest-descent images
  Eigen::LDLT<Eigen::MatrixXd> hessian_;
  std::vector<std::vector<std::size_t>> vertex_triangles_;
};

FitResult fit(const Aam& aam, const Image& image, const Shape& init_shape, int max_iters, double tol);

// --- Features ----------------------------------------------------------------

enum class AppearanceBasis { per_resolution, native };

struct FeatureVector {
  Eigen::VectorXd shape_params;
  Eigen::VectorXd appearance_params;
};

/// Appearance features of frames degraded to one resolution. With
/// `per_resolution`, the basis is rebuilt from the key frames degraded the
/// same way, keeping the native model's mode count.
class ResolutionFeatureExtractor {
 public:
  ResolutionFeatureExtractor(const Aam& aam, const std::vector<LabelledFrame>& key_frames, Resolution target,
                             AppearanceBasis basis = AppearanceBasis::per_resolution);

  FeatureVector extract(const Frame& frame, const Shape& fitted_shape) const;
  Eigen::VectorXd appearance(const Frame& frame, const Shape& fitted_shape) const;
  Resolution target() const { return target_; }
  const PcaBasis& basis() const { return basis_; }

 private:
  TextureVector degraded_texture(const Frame& frame, const Shape& shape) const;

  const Aam* aam_;
  Resolution target_;
  PcaBasis basis_;
};

/// Shape shape parameters of `fitted_shape` restricted to the model's landmarks.
Eigen::VectorXd shape_features(const Aam& aam, const Shape& fitted_shape);

std::vector<FeatureVector> features_for_sequence(const Aam& aam, const std::vector<LabelledFrame>& key_frames,
                                                 const std::vector<Frame>& frames,
                                                 const std::vector<Shape>& fitted_shapes, Resolution target,
                                                 AppearanceBasis basis = AppearanceBasis::per_resolution);

// --- Storage -------------------------------------------------------------------

void save_aam(const std::filesystem::path& path, const Aam& aam);
Aam load_aam(const std::filesystem::path& path);

}  // namespace lipres
