#include <algorithm>
#include <cmath>

#include "lipres/aam.hpp"
#include "lipres/error.hpp"
#include "reference_image.hpp"

namespace lipres {

namespace {

// Affine map taking triangle (a,b,c) onto (A,B,C), as 2x3 [M | t].
Eigen::Matrix<double, 2, 3> triangle_affine(Point a, Point b, Point c, Point A, Point B, Point C) {
  Eigen::Matrix3d src;
  src << a.x, b.x, c.x, a.y, b.y, c.y, 1, 1, 1;
  Eigen::Matrix<double, 2, 3> dst;
  dst << A.x, B.x, C.x, A.y, B.y, C.y;
  return dst * src.inverse();
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

Fitter::Fitter(const Aam& aam) : aam_(&aam) {
  const Shape& s0 = aam.reference_shape;
  const auto n = static_cast<Eigen::Index>(s0.size());
  base_ = to_vector(s0);
  center_ = s0.centroid();
  n_sqrt_ = std::sqrt(static_cast<double>(n));

  Eigen::MatrixXd sim(2 * n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = base_[2 * i] - center_.x, dy = base_[2 * i + 1] - center_.y;
    sim(2 * i, 0) = dx;
    sim(2 * i + 1, 0) = dy;
    sim(2 * i, 1) = -dy;
    sim(2 * i + 1, 1) = dx;
    sim(2 * i, 2) = 1.0;
    sim(2 * i + 1, 2) = 0.0;
    sim(2 * i, 3) = 0.0;
    sim(2 * i + 1, 3) = 1.0;
  }
  sim_norm_ = sim.col(0).norm();
  if (sim_norm_ <= 0.0) throw Error("fit: reference shape has no spread");
  sim.col(0) /= sim_norm_;
  sim.col(1) /= sim_norm_;
  sim.col(2) /= n_sqrt_;
  sim.col(3) /= n_sqrt_;

  // Shape modes expressed in reference pixels, orthogonalized against the
  // similarity directions.
  const double rot = aam.to_reference.rotation;
  const double cr = std::cos(rot), sr = std::sin(rot);
  const Eigen::MatrixXd& U = aam.shape_model.basis.modes;
  std::vector<Eigen::VectorXd> cols;
  for (Eigen::Index m = 0; m < U.cols(); ++m) {
    Eigen::VectorXd w(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      w[2 * i] = cr * U(2 * i, m) - sr * U(2 * i + 1, m);
      w[2 * i + 1] = sr * U(2 * i, m) + cr * U(2 * i + 1, m);
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (int k = 0; k < 4; ++k) w -= sim.col(k).dot(w) * sim.col(k);
      for (const auto& c : cols) w -= c.dot(w) * c;
    }
    const double norm = w.norm();
    if (norm < 1e-8) continue;
    cols.push_back(w / norm);
  }
  shape_basis_.resize(2 * n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) shape_basis_.col(static_cast<Eigen::Index>(c)) = cols[c];

  Eigen::MatrixXd basis(2 * n, 4 + shape_basis_.cols());
  basis << sim, shape_basis_;

  // Steepest-descent images at the identity warp.
  const auto& frame = aam.appearance_model.frame;
  const auto& app = aam.appearance_model.basis;
  const detail::ReferenceImage mean_image(frame, app.mean);
  const auto K = static_cast<Eigen::Index>(frame.size());
  const Eigen::Index P = basis.cols();
  sd_.resize(K, P);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto [gx, gy] = mean_image.gradient(static_cast<int>(frame.mask[k].x), static_cast<int>(frame.mask[k].y));
    const auto& t = frame.mesh.triangles[frame.triangle_of[k]];
    const auto& l = frame.bary[k];
    for (Eigen::Index p = 0; p < P; ++p) {
      double jx = 0.0, jy = 0.0;
      for (int v = 0; v < 3; ++v) {
        jx += l[v] * basis(2 * static_cast<Eigen::Index>(t[v]), p);
        jy += l[v] * basis(2 * static_cast<Eigen::Index>(t[v]) + 1, p);
      }
      sd_(k, p) = gx * jx + gy * jy;
    }
  }
  sd_ -= app.modes * (app.modes.transpose() * sd_);
  const Eigen::MatrixXd H = sd_.transpose() * sd_;
  hessian_.compute(H);
  const Eigen::VectorXd d = hessian_.vectorD().cwiseAbs();
  if (hessian_.info() != Eigen::Success || d.minCoeff() <= 1e-10 * std::max(d.maxCoeff(), 1e-300))
    throw Error("fit: singular Hessian (appearance too flat to constrain the warp)");

  vertex_triangles_.assign(s0.size(), {});
  const auto& tris = aam.triangulation.triangles;
  for (std::size_t ti = 0; ti < tris.size(); ++ti)
    for (std::size_t v : tris[ti]) vertex_triangles_[v].push_back(ti);
}

Shape Fitter::shape_for(const Eigen::VectorXd& params) const {
  const Eigen::Index n = base_.size() / 2;
  const double a = params[0] / sim_norm_, b = params[1] / sim_norm_;
  const double tx = params[2] / n_sqrt_, ty = params[3] / n_sqrt_;
  const Eigen::VectorXd local = base_ + shape_basis_ * params.tail(shape_basis_.cols());
  Shape s;
  s.points.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = local[2 * i] - center_.x, dy = local[2 * i + 1] - center_.y;
    s.points[static_cast<std::size_t>(i)] = {center_.x + (1 + a) * dx - b * dy + tx,
                                             center_.y + b * dx + (1 + a) * dy + ty};
  }
  return s;
}

Eigen::VectorXd Fitter::params_for(const Shape& shape) const {
  const Eigen::Index n = base_.size() / 2;
  if (static_cast<Eigen::Index>(shape.size()) != n) throw Error("fit: shape topology mismatch");
  const Eigen::VectorXd v = to_vector(shape);
  const Eigen::VectorXd d = v - base_;
  Eigen::VectorXd params(n_params());
  // Similarity coefficients over the orthonormal similarity directions.
  double q1 = 0.0, q2 = 0.0, q3 = 0.0, q4 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ex = base_[2 * i] - center_.x, ey = base_[2 * i + 1] - center_.y;
    q1 += d[2 * i] * ex + d[2 * i + 1] * ey;
    q2 += -d[2 * i] * ey + d[2 * i + 1] * ex;
    q3 += d[2 * i];
    q4 += d[2 * i + 1];
  }
  params[0] = q1 / sim_norm_;
  params[1] = q2 / sim_norm_;
  params[2] = q3 / n_sqrt_;
  params[3] = q4 / n_sqrt_;

  const double a = params[0] / sim_norm_, b = params[1] / sim_norm_;
  const double tx = params[2] / n_sqrt_, ty = params[3] / n_sqrt_;
  const double s = (1 + a) * (1 + a) + b * b;
  if (!(s > 0.0)) throw Error("fit: degenerate similarity");
  Eigen::VectorXd local(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = v[2 * i] - center_.x - tx, dy = v[2 * i + 1] - center_.y - ty;
    // Inverse of [[1+a, -b], [b, 1+a]].
    local[2 * i] = center_.x + ((1 + a) * dx + b * dy) / s;
    local[2 * i + 1] = center_.y + (-b * dx + (1 + a) * dy) / s;
  }
  params.tail(shape_basis_.cols()) = shape_basis_.transpose() * (local - base_);
  return params;
}

Point Fitter::warp_point(std::size_t k, const Eigen::VectorXd& params) const {
  return aam_->appearance_model.frame.map(shape_for(params), k);
}

Eigen::Matrix<double, 2, Eigen::Dynamic> Fitter::warp_jacobian(std::size_t k, const Eigen::VectorXd& params) const {
  const auto& frame = aam_->appearance_model.frame;
  const auto& t = frame.mesh.triangles[frame.triangle_of[k]];
  const auto& l = frame.bary[k];
  const double a = params[0] / sim_norm_, b = params[1] / sim_norm_;
  const Eigen::VectorXd local = base_ + shape_basis_ * params.tail(shape_basis_.cols());
  Eigen::Matrix<double, 2, Eigen::Dynamic> J = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, n_params());
  for (int v = 0; v < 3; ++v) {
    const auto i = static_cast<Eigen::Index>(t[v]);
    const double dx = local[2 * i] - center_.x, dy = local[2 * i + 1] - center_.y;
    J(0, 0) += l[v] * dx / sim_norm_;
    J(1, 0) += l[v] * dy / sim_norm_;
    J(0, 1) += l[v] * -dy / sim_norm_;
    J(1, 1) += l[v] * dx / sim_norm_;
    J(0, 2) += l[v] / n_sqrt_;
    J(1, 3) += l[v] / n_sqrt_;
    for (Eigen::Index m = 0; m < shape_basis_.cols(); ++m) {
      const double wx = shape_basis_(2 * i, m), wy = shape_basis_(2 * i + 1, m);
      J(0, 4 + m) += l[v] * ((1 + a) * wx - b * wy);
      J(1, 4 + m) += l[v] * (b * wx + (1 + a) * wy);
    }
  }
  return J;
}

Eigen::VectorXd Fitter::compose_inverse(const Eigen::VectorXd& params, const Eigen::VectorXd& delta) const {
  // First-order inverse of the increment, in reference coordinates.
  Eigen::VectorXd inv = -delta;
  const Shape inc = shape_for(inv);
  const Shape cur = shape_for(params);
  const auto& s0 = aam_->reference_shape.points;
  const auto& tris = aam_->triangulation.triangles;
  Shape next;
  next.points.resize(s0.size());
  for (std::size_t i = 0; i < s0.size(); ++i) {
    double x = 0.0, y = 0.0;
    for (std::size_t ti : vertex_triangles_[i]) {
      const auto& t = tris[ti];
      const auto M = triangle_affine(s0[t[0]], s0[t[1]], s0[t[2]], cur.points[t[0]], cur.points[t[1]],
                                     cur.points[t[2]]);
      const Eigen::Vector3d p(inc.points[i].x, inc.points[i].y, 1.0);
      const Eigen::Vector2d q = M * p;
      x += q.x();
      y += q.y();
    }
    const double c = static_cast<double>(vertex_triangles_[i].size());
    next.points[i] = {x / c, y / c};
  }
  return params_for(next);
}

FitResult Fitter::fit(const Frame& frame, const Shape& init_shape, int max_iters, double tol) const {
  const auto& ref = aam_->appearance_model.frame;
  const auto& app = aam_->appearance_model.basis;
  if (init_shape.size() != aam_->n_points()) throw Error("fit: initial shape has wrong point count");
  for (const auto& p : init_shape.points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0 || p.y < 0 || p.x > frame.canvas.width - 1 ||
        p.y > frame.canvas.height - 1)
      throw Error("fit: initial shape outside the image");

  auto residual = [&](const Eigen::VectorXd& params, Eigen::VectorXd& err) {
    const Shape s = shape_for(params);
    err = warp_to_reference(frame.window, frame.x0, frame.y0, s, ref).values - app.mean;
    err -= app.modes * (app.modes.transpose() * err);
    return std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
  };

  FitResult r;
  Eigen::VectorXd params = params_for(init_shape);
  Eigen::VectorXd err;
  r.residual_history.push_back(residual(params, err));
  bool small_step = false;
  const double rms_scale = std::sqrt(static_cast<double>(n_params()));
  Eigen::VectorXd trial_err;
  for (int it = 0; it < max_iters && !small_step; ++it) {
    Eigen::VectorXd delta = hessian_.solve(sd_.transpose() * err);
    if (!all_finite(delta)) break;
    // Backtrack on the increment until the projected residual does not grow.
    bool accepted = false;
    for (int halving = 0; halving < 12; ++halving, delta *= 0.5) {
      if (delta.norm() / rms_scale < tol) {
        small_step = true;
        break;
      }
      const Eigen::VectorXd next = compose_inverse(params, delta);
      if (!all_finite(next)) continue;
      const double res = residual(next, trial_err);
      if (res <= r.residual_history.back() + 1e-9) {
        params = next;
        err.swap(trial_err);
        r.residual_history.push_back(res);
        accepted = true;
        if (halving == 0 && delta.norm() / rms_scale < tol) small_step = true;
        break;
      }
    }
    ++r.iterations;
    if (!accepted) break;
  }

  // Forward-additive refinement with the exact warp Jacobian at the current
  // estimate. The inverse-compositional steps use template Jacobians, which
  // drift from the true ones under large non-rigid deformation.
  if (all_finite(params) && max_iters > 0) {
    const Eigen::Index P = n_params();
    const auto K = static_cast<Eigen::Index>(ref.size());
    small_step = false;
    for (int it = 0; it < max_iters && !small_step; ++it) {
      const Shape s = shape_for(params);
      Eigen::MatrixXd J(K, P);
      for (Eigen::Index k = 0; k < K; ++k) {
        const Point q = ref.map(s, static_cast<std::size_t>(k));
        const double x = q.x - frame.x0, y = q.y - frame.y0;
        const double gx = frame.window.sample(x + 0.5, y) - frame.window.sample(x - 0.5, y);
        const double gy = frame.window.sample(x, y + 0.5) - frame.window.sample(x, y - 0.5);
        const auto dw = warp_jacobian(static_cast<std::size_t>(k), params);
        J.row(k) = gx * dw.row(0) + gy * dw.row(1);
      }
      J -= app.modes * (app.modes.transpose() * J);
      const Eigen::LDLT<Eigen::MatrixXd> h(J.transpose() * J);
      if (h.info() != Eigen::Success) break;
      Eigen::VectorXd delta = -h.solve(J.transpose() * err);
      if (!all_finite(delta)) break;
      bool accepted = false;
      for (int halving = 0; halving < 12; ++halving, delta *= 0.5) {
        if (delta.norm() / rms_scale < tol) {
          small_step = true;
          break;
        }
        const Eigen::VectorXd next = params + delta;
        const double res = residual(next, trial_err);
        if (res <= r.residual_history.back() + 1e-9) {
          params = next;
          err.swap(trial_err);
          r.residual_history.push_back(res);
          accepted = true;
          break;
        }
      }
      ++r.iterations;
      if (!accepted) break;
    }
  }

  r.converged = small_step && all_finite(params);
  r.fitted_shape = shape_for(params);
  r.residual_rms = std::isfinite(r.residual_history.back()) ? r.residual_history.back() : 0.0;
  if (all_finite(params)) {
    const Eigen::VectorXd tex = warp_to_reference(frame.window, frame.x0, frame.y0, r.fitted_shape, ref).values;
    r.appearance_params = app.project(tex);
    r.shape_params = aam_->shape_model.project(r.fitted_shape);
  } else {
    r.shape_params = Eigen::VectorXd::Zero(aam_->shape_model.size());
    r.appearance_params = Eigen::VectorXd::Zero(app.size());
    r.residual_rms = std::numeric_limits<double>::infinity();
  }
  return r;
}

FitResult fit(const Aam& aam, const Image& image, const Shape& init_shape, int max_iters, double tol) {
  return Fitter(aam).fit(image, init_shape, max_iters, tol);
}

}  // namespace lipres
