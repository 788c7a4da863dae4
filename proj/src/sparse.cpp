#include "narrate/detail/sparse.hpp"

#include <algorithm>
#include <cmath>

namespace narrate::detail {

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
    y[i] = s;
  }
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      if (col[k] == i) d[i] += val[k];
  return d;
}

void TripletBuilder::add(int row, int col, double value) {
  rows_[static_cast<std::size_t>(row)].emplace_back(col, value);
}

CsrMatrix TripletBuilder::build() const {
  CsrMatrix m;
  m.n = n_;
  m.row_ptr.reserve(static_cast<std::size_t>(n_) + 1);
  m.row_ptr.push_back(0);
  for (const auto& row : rows_) {
    auto sorted = row;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < sorted.size();) {
      const int c = sorted[k].first;
      double v = 0;
      for (; k < sorted.size() && sorted[k].first == c; ++k) v += sorted[k].second;
      m.col.push_back(c);
      m.val.push_back(v);
    }
    m.row_ptr.push_back(static_cast<int>(m.col.size()));
  }
  return m;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> a) {
  double m = 0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

CgResult conjugate_gradient(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                            const CgOptions& options) {
  const auto n = static_cast<std::size_t>(a.n);
  CgResult result;
  const double b_norm = std::sqrt(dot(b, b));
  if (b_norm == 0) {
    std::fill(x.begin(), x.end(), 0.0);
    result.converged = true;
    return result;
  }

  std::vector<double> inv_diag = a.diagonal();
  for (double& d : inv_diag) d = d > 0 ? 1.0 / d : 1.0;

  std::vector<double> r(n), z(n), p(n), ap(n);
  auto true_residual = [&]() {
    a.multiply(x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  };
  auto satisfied = [&](double r_norm) {
    return r_norm <= options.rel_tol * b_norm && max_abs(r) <= options.max_abs_residual;
  };

  true_residual();
  int iterations = 0;
  // The outer loop restarts from the true residual when the recursive one
  // has drifted below tolerance without the true one following.
  for (int restart = 0; restart < 4; ++restart) {
    if (satisfied(std::sqrt(dot(r, r)))) break;
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = dot(r, z);
    while (iterations < options.max_iter) {
      a.multiply(p, ap);
      const double pap = dot(p, ap);
      if (!(pap > 0)) break;
      const double alpha = rz / pap;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      ++iterations;
      if (satisfied(std::sqrt(dot(r, r)))) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
      const double rz_next = dot(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    true_residual();
    if (iterations >= options.max_iter) break;
  }

  const double r_norm = std::sqrt(dot(r, r));
  result.iterations = iterations;
  result.relative_residual = r_norm / b_norm;
  result.converged = satisfied(r_norm);
  return result;
}

}  // namespace narrate::detail
