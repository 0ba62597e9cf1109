#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "nga/common.hpp"

namespace nga {

/// Central-difference Jacobian estimate of a vector function, row-major
/// (rows index outputs). Verification tool only; training never touches it.
inline std::vector<Vec> numeric_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                                         double step) {
  if (step <= 0.0) throw Error("numeric_jacobian: step must be positive");
  Vec xp = x, xm = x;
  std::vector<Vec> jac;
  const size_t n = x.size();
  for (size_t j = 0; j < n; ++j) {
    xp[j] = x[j] + step;
    xm[j] = x[j] - step;
    const Vec fp = f(xp);
    const Vec fm = f(xm);
    if (j == 0) jac.assign(fp.size(), Vec(n, 0.0));
    for (size_t i = 0; i < fp.size(); ++i) jac[i][j] = (fp[i] - fm[i]) / (2.0 * step);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return jac;
}

/// Determinant by LU with partial pivoting.
inline double determinant(std::vector<Vec> m) {
  const size_t n = m.size();
  double det = 1.0;
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (m[piv][col] == 0.0) return 0.0;
    if (piv != col) {
      std::swap(m[piv], m[col]);
      det = -det;
    }
    det *= m[col][col];
    for (size_t r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      if (f == 0.0) continue;
      for (size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
    }
  }
  return det;
}

/// Central-difference gradient of a scalar function, the oracle used by the
/// gradient-correctness tests.
inline Vec numeric_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                            double step) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (size_t j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + step;
    xm[j] = x[j] - step;
    g[j] = (f(xp) - f(xm)) / (2.0 * step);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return g;
}

}  // namespace nga
