#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "lipres/aam.hpp"
#include "lipres/error.hpp"

namespace lipres {

double PcaBasis::retained_fraction() const {
  if (total_variance <= 0.0) return 1.0;
  return eigenvalues.sum() / total_variance;
}

namespace {

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0) v = -v;
}

}  // namespace

PcaBasis pca(const Eigen::MatrixXd& samples, const PcaOptions& options) {
  const Eigen::Index dim = samples.rows();
  const Eigen::Index count = samples.cols();
  if (count < 2) throw Error("pca: need at least 2 samples");

  PcaBasis b;
  b.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centered = samples.colwise() - b.mean;
  const double denom = static_cast<double>(count - 1);

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // dim x r, unit columns
  if (count <= dim) {
    const Eigen::MatrixXd gram = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    values = es.eigenvalues().reverse();
    const Eigen::MatrixXd v = es.eigenvectors().rowwise().reverse();
    vectors.resize(dim, count);
    for (Eigen::Index i = 0; i < count; ++i) {
      const double lambda = std::max(values[i], 0.0);
      values[i] = lambda;
      if (lambda > 0.0)
        vectors.col(i) = centered * v.col(i) / std::sqrt(denom * lambda);
      else
        vectors.col(i).setZero();
    }
  } else {
    const Eigen::MatrixXd cov = (centered * centered.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    values = es.eigenvalues().reverse().cwiseMax(0.0);
    vectors = es.eigenvectors().rowwise().reverse();
  }

  b.total_variance = values.sum();
  const double lmax = values.size() > 0 ? values[0] : 0.0;
  Eigen::Index rank = 0;
  while (rank < values.size() && values[rank] > 1e-12 * lmax && values[rank] > 0.0) ++rank;

  Eigen::Index keep = 0;
  if (options.mode_count) {
    keep = *options.mode_count;
    if (keep < 1) throw Error("pca: mode count must be positive");
    if (keep > rank && options.completion == nullptr)
      throw Error(rank == 0 ? "no variance" : "pca: fewer informative modes than requested");
  } else {
    if (rank == 0 || b.total_variance <= 0.0) throw Error("no variance");
    const double target = std::clamp(options.retain, 0.0, 1.0);
    double cum = 0.0;
    keep = rank;
    for (Eigen::Index i = 0; i < rank; ++i) {
      cum += values[i];
      if (cum / b.total_variance >= target - 1e-12) {
        keep = i + 1;
        break;
      }
    }
    keep = std::max<Eigen::Index>(keep, 1);
  }

  const Eigen::Index from_data = std::min(keep, rank);
  b.modes.resize(dim, keep);
  b.eigenvalues.resize(keep);
  for (Eigen::Index i = 0; i < from_data; ++i) {
    Eigen::VectorXd u = vectors.col(i);
    // Gram-Schmidt touch-up keeps the columns orthonormal to machine precision.
    for (Eigen::Index j = 0; j < i; ++j) u -= b.modes.col(j).dot(u) * b.modes.col(j);
    u.normalize();
    fix_sign(u);
    b.modes.col(i) = u;
    b.eigenvalues[i] = values[i];
  }
  if (from_data < keep) {
    const Eigen::MatrixXd& extra = *options.completion;
    if (extra.rows() != dim) throw Error("pca: completion basis has wrong dimension");
    Eigen::Index filled = from_data;
    for (Eigen::Index c = 0; c < extra.cols() && filled < keep; ++c) {
      Eigen::VectorXd u = extra.col(c);
      for (Eigen::Index j = 0; j < filled; ++j) u -= b.modes.col(j).dot(u) * b.modes.col(j);
      const double norm = u.norm();
      if (norm < 1e-8) continue;
      u /= norm;
      fix_sign(u);
      b.modes.col(filled) = u;
      b.eigenvalues[filled] = 0.0;
      ++filled;
    }
    if (filled < keep) throw Error("pca: completion basis too small");
  }
  return b;
}

}  // namespace lipres
