#include "evline/linalg.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <utility>

namespace evline {
namespace {

SymmetricEigen3 identity_eigen(double value) {
  SymmetricEigen3 r;
  r.values = {value, value, value};
  r.vectors = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
  return r;
}

double quad_form(const Mat3& m, const Vec3& u, const Vec3& v) { return u.dot(m * v); }

void sort_descending(SymmetricEigen3& r) {
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(),
            [&](int i, int j) { return r.values[i] > r.values[j]; });
  SymmetricEigen3 s;
  for (int k = 0; k < 3; ++k) {
    s.values[k] = r.values[idx[k]];
    s.vectors[k] = r.vectors[idx[k]];
  }
  if (s.vectors[0].cross(s.vectors[1]).dot(s.vectors[2]) < 0.0) {
    s.vectors[2] = -s.vectors[2];
  }
  r = s;
}

// Unit vector spanning the null space of (m - lambda I), or a zero vector
// when the rows are numerically dependent in more than one direction.
Vec3 null_vector(const Mat3& m, double lambda) {
  const Vec3 r0{m[0][0] - lambda, m[0][1], m[0][2]};
  const Vec3 r1{m[1][0], m[1][1] - lambda, m[1][2]};
  const Vec3 r2{m[2][0], m[2][1], m[2][2] - lambda};
  const Vec3 c01 = r0.cross(r1);
  const Vec3 c02 = r0.cross(r2);
  const Vec3 c12 = r1.cross(r2);
  const double d01 = c01.dot(c01);
  const double d02 = c02.dot(c02);
  const double d12 = c12.dot(c12);
  const double dmax = std::max({d01, d02, d12});
  if (!(dmax > 1e-20)) return {};
  const Vec3& best = dmax == d01 ? c01 : (dmax == d02 ? c02 : c12);
  return best * (1.0 / std::sqrt(dmax));
}

}  // namespace

SymmetricEigen3 eigen_symmetric3(const Mat3& a) {
  double scale = 0.0;
  for (const auto& row : a) {
    for (double v : row) scale = std::max(scale, std::abs(v));
  }
  if (scale == 0.0) return identity_eigen(0.0);

  Mat3 b;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) b[i][j] = a[i][j] / scale;
  }

  const double q = (b[0][0] + b[1][1] + b[2][2]) / 3.0;
  const double c00 = b[0][0] - q, c11 = b[1][1] - q, c22 = b[2][2] - q;
  const double p2 = (c00 * c00 + c11 * c11 + c22 * c22 +
                     2.0 * (b[0][1] * b[0][1] + b[0][2] * b[0][2] + b[1][2] * b[1][2])) /
                    6.0;
  if (p2 < 1e-30) return identity_eigen(q * scale);
  const double p = std::sqrt(p2);
  const double det = (c00 * (c11 * c22 - b[1][2] * b[1][2]) -
                      b[0][1] * (b[0][1] * c22 - b[1][2] * b[0][2]) +
                      b[0][2] * (b[0][1] * b[1][2] - c11 * b[0][2])) /
                     (p * p * p);
  const double r = std::clamp(det / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double e2 = 3.0 * q - e1 - e3;

  // The eigenvalue farther from its neighbour is accurate from the
  // trigonometric formula; the close pair is resolved exactly below.
  const double isolated = (e1 - e2) >= (e2 - e3) ? e1 : e3;
  const Vec3 w = null_vector(b, isolated);
  if (w.dot(w) == 0.0) return eigen_symmetric3_jacobi(a);

  const Vec3 axis = std::abs(w.x) < 0.6 ? Vec3{1, 0, 0}
                    : std::abs(w.y) < 0.6 ? Vec3{0, 1, 0}
                                          : Vec3{0, 0, 1};
  const Vec3 u = w.cross(axis).normalized();
  const Vec3 v = w.cross(u);

  const double a11 = quad_form(b, u, u);
  const double a12 = quad_form(b, u, v);
  const double a22 = quad_form(b, v, v);
  double l1 = a11, l2 = a22;
  Vec3 v1 = u, v2 = v;
  if (a12 != 0.0) {
    const double theta = (a22 - a11) / (2.0 * a12);
    const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;
    l1 = a11 - t * a12;
    l2 = a22 + t * a12;
    v1 = u * c - v * s;
    v2 = u * s + v * c;
  }

  SymmetricEigen3 out;
  out.values = {quad_form(b, w, w) * scale, l1 * scale, l2 * scale};
  out.vectors = {w, v1, v2};
  sort_descending(out);
  return out;
}

SymmetricEigen3 eigen_symmetric3_jacobi(const Mat3& a) {
  Mat3 m = a;
  Mat3 v{};
  v[0][0] = v[1][1] = v[2][2] = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    const double diag = m[0][0] * m[0][0] + m[1][1] * m[1][1] + m[2][2] * m[2][2];
    if (off <= std::numeric_limits<double>::min() ||
        off <= 1e-36 * diag) {
      break;
    }
    for (int pi = 0; pi < 2; ++pi) {
      for (int qi = pi + 1; qi < 3; ++qi) {
        const double apq = m[pi][qi];
        if (apq == 0.0) continue;
        const double theta = (m[qi][qi] - m[pi][pi]) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double mkp = m[k][pi];
          const double mkq = m[k][qi];
          m[k][pi] = c * mkp - s * mkq;
          m[k][qi] = s * mkp + c * mkq;
        }
        for (int k = 0; k < 3; ++k) {
          const double mpk = m[pi][k];
          const double mqk = m[qi][k];
          m[pi][k] = c * mpk - s * mqk;
          m[qi][k] = s * mpk + c * mqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][pi];
          const double vkq = v[k][qi];
          v[k][pi] = c * vkp - s * vkq;
          v[k][qi] = s * vkp + c * vkq;
        }
      }
    }
  }

  SymmetricEigen3 out;
  for (int k = 0; k < 3; ++k) {
    out.values[k] = m[k][k];
    out.vectors[k] = Vec3{v[0][k], v[1][k], v[2][k]};
  }
  sort_descending(out);
  return out;
}

}  // namespace evline
