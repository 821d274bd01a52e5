#pragma once

// SO(3) manifold primitives: skew maps, QR retraction, vector transport,
// covariance transport and nearest-SPD repair.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "manifold_track/errors.hpp"

namespace mtrack {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

/// Column-major vectorization, the layout of the orientation block of the state.
inline Vec9 vec(const Mat3& m) { return Eigen::Map<const Vec9>(m.data()); }

inline Mat3 unvec(const Vec9& v) { return Eigen::Map<const Mat3>(v.data()); }

/// Frobenius norm of m^T m - I.
inline double orthogonality_residual(const Mat3& m) {
  return (m.transpose() * m - Mat3::Identity()).norm();
}

/// Local defining function check: ||x^T x - I||_F <= tol and det(x) > 0.
inline bool check_on_manifold(const Mat3& x, double tol) {
  if (!x.allFinite()) return false;
  return orthogonality_residual(x) <= tol && x.determinant() > 0.0;
}

/// An element of SO(3). Construction validates the manifold constraint.
class Rotation {
public:
  static constexpr double kDefaultTolerance = 1e-9;

  Rotation() : m_(Mat3::Identity()) {}

  explicit Rotation(const Mat3& m, double tol = kDefaultTolerance) : m_(m) {
    if (!check_on_manifold(m, tol)) {
      throw InvalidArgument("matrix is not a rotation (residual " +
                            std::to_string(orthogonality_residual(m)) + ")");
    }
  }

  static Rotation identity() { return Rotation(); }

  /// Rotation by `angle` radians about a unit axis.
  static Rotation about_axis(const Vec3& axis, double angle) {
    return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
  }

  const Mat3& matrix() const noexcept { return m_; }
  Vec9 vec() const { return mtrack::vec(m_); }

  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_, 1e-8); }
  Rotation transpose() const { return Rotation(m_.transpose(), 1e-8); }

private:
  Mat3 m_;
};

/// Skew-symmetric 3x3 matrix stored by its three free parameters.
class SkewMatrix {
public:
  SkewMatrix() : w_(Vec3::Zero()) {}
  explicit SkewMatrix(const Vec3& w) : w_(w) {}

  const Vec3& vector() const noexcept { return w_; }

  Mat3 matrix() const {
    Mat3 m;
    m << 0.0, -w_.z(), w_.y(),
         w_.z(), 0.0, -w_.x(),
         -w_.y(), w_.x(), 0.0;
    return m;
  }

private:
  Vec3 w_;
};

/// Factored tangent vector v = base * skew at a point of SO(3).
struct TangentVector {
  Rotation base;
  SkewMatrix skew;

  Mat3 matrix() const { return base.matrix() * skew.matrix(); }
};

inline SkewMatrix hat(const Vec3& w) {
  if (!w.allFinite()) throw InvalidArgument("hat: non-finite vector");
  return SkewMatrix(w);
}

inline Mat3 hat_matrix(const Vec3& w) { return hat(w).matrix(); }

inline Vec3 vee(const Mat3& s) {
  if (!s.allFinite()) throw InvalidArgument("vee: non-finite matrix");
  if ((s + s.transpose()).norm() > 1e-10) {
    throw InvalidArgument("vee: matrix is not skew-symmetric");
  }
  return Vec3(s(2, 1), s(0, 2), s(1, 0));
}

inline Vec3 vee(const SkewMatrix& s) { return s.vector(); }

/// Frobenius-nearest skew matrix, (m - m^T) / 2.
inline SkewMatrix skew_project(const Mat3& m) {
  const Mat3 s = 0.5 * (m - m.transpose());
  return SkewMatrix(Vec3(s(2, 1), s(0, 2), s(1, 0)));
}

/// QR retraction: Q-factor of x + v with the diagonal of R forced positive.
/// v need not be tangent at x; the factorization absorbs normal components.
inline Rotation retract(const Rotation& x, const Mat3& v) {
  if (!v.allFinite()) throw InvalidArgument("retract: non-finite increment");
  // The Q-factor of an orthogonal matrix with positive-diagonal R is itself.
  if (v.isZero(0.0)) return x;
  const Mat3 a = x.matrix() + v;
  Eigen::HouseholderQR<Mat3> qr(a);
  Mat3 q = qr.householderQ();
  const Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
  const double scale = std::max(a.norm(), 1.0);
  for (int i = 0; i < 3; ++i) {
    if (std::abs(r(i, i)) <= 1e3 * std::numeric_limits<double>::epsilon() * scale) {
      throw SingularRetraction("retract: x + v is rank deficient");
    }
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  if (q.determinant() < 0.0) {
    throw SingularRetraction("retract: x + v has negative determinant");
  }
  return Rotation(q);
}

/// Moves v (tangent at x) to the tangent space at y as y * skew(x^T v).
inline Mat3 vector_transport(const Rotation& x, const Rotation& y, const Mat3& v) {
  return y.matrix() * skew_project(x.matrix().transpose() * v).matrix();
}

/// Transports an orientation covariance block from the tangent space at x to
/// the one at y: eigenvectors are reshaped column-major, transported, and
/// recombined with the original eigenvalues.
inline Mat9 transport_covariance(const Mat9& p, const Rotation& x, const Rotation& y) {
  if (!p.allFinite()) throw NumericalError("transport_covariance: non-finite covariance");
  const Mat9 sym = 0.5 * (p + p.transpose());
  Eigen::SelfAdjointEigenSolver<Mat9> es(sym);
  if (es.info() != Eigen::Success) {
    throw NumericalError("transport_covariance: eigendecomposition failed");
  }
  const Mat9& v = es.eigenvectors();
  Mat9 moved;
  for (int i = 0; i < 9; ++i) {
    moved.col(i) = vec(vector_transport(x, y, unvec(v.col(i))));
  }
  const Mat9 out = moved * es.eigenvalues().asDiagonal() * moved.transpose();
  return 0.5 * (out + out.transpose());
}

/// Nearest symmetric positive definite matrix (Higham): symmetrize, average
/// with the symmetric polar factor, then add growing diagonal jitter until a
/// Cholesky factorization succeeds.
template <typename Derived>
typename Derived::PlainObject nearest_spd(const Eigen::MatrixBase<Derived>& a) {
  using Matrix = typename Derived::PlainObject;
  if (a.rows() != a.cols()) throw InvalidArgument("nearest_spd: matrix is not square");
  if (!a.allFinite()) throw InvalidArgument("nearest_spd: non-finite entries");

  const Matrix b = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(b);
  if (es.info() != Eigen::Success) throw NumericalError("nearest_spd: eigendecomposition failed");
  const Matrix polar = es.eigenvectors() * es.eigenvalues().cwiseAbs().asDiagonal() *
                       es.eigenvectors().transpose();
  Matrix out = 0.5 * (b + polar);
  out = 0.5 * (out + out.transpose()).eval();

  const double norm = a.norm();
  const double scale = norm > 0.0 ? norm : 1.0;
  const double eps = std::numeric_limits<double>::epsilon();
  const Matrix eye = Matrix::Identity(a.rows(), a.cols());
  constexpr int kMaxIterations = 100;
  for (int k = 0; k < kMaxIterations; ++k) {
    Eigen::LLT<Matrix> llt(out);
    if (llt.info() == Eigen::Success) return out;
    out += (1.0 + k) * eps * scale * eye;
  }
  throw NumericalError("nearest_spd: Cholesky still failing after jitter");
}

/// True when an LLT factorization of m succeeds.
template <typename Derived>
bool has_cholesky(const Eigen::MatrixBase<Derived>& m) {
  Eigen::LLT<typename Derived::PlainObject> llt(m);
  return llt.info() == Eigen::Success;
}

/// Closest rotation in Frobenius norm (SVD projection). Used to score
/// estimates that are allowed to drift off the manifold.
inline Rotation nearest_rotation(const Mat3& m) {
  if (!m.allFinite()) throw InvalidArgument("nearest_rotation: non-finite matrix");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Rotation(svd.matrixU() * d * svd.matrixV().transpose());
}

}  // namespace mtrack
