#pragma once

#include <limits>
#include <span>
#include <vector>

namespace narrate::detail {

/// Compressed sparse row matrix, square.
struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> diagonal() const;
};

/// Accumulates (row, col, value) entries; duplicates are summed.
class TripletBuilder {
 public:
  explicit TripletBuilder(int n) : n_(n), rows_(static_cast<std::size_t>(n)) {}

  void add(int row, int col, double value);
  CsrMatrix build() const;

 private:
  int n_;
  std::vector<std::vector<std::pair<int, double>>> rows_;
};

struct CgOptions {
  double rel_tol = 1e-8;
  int max_iter = 1000;
  /// Additional bound on max |r_i|; infinity disables it.
  double max_abs_residual = std::numeric_limits<double>::infinity();
};

struct CgResult {
  int iterations = 0;
  double relative_residual = 0;  // true residual ||b - Ax|| / ||b||
  bool converged = false;
};

/// Jacobi-preconditioned conjugate gradient for a symmetric positive
/// (semi-)definite matrix. `x` holds the initial guess and receives the
/// solution. Reductions run in a fixed order, so results are bitwise
/// reproducible.
CgResult conjugate_gradient(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                            const CgOptions& options);

}  // namespace narrate::detail
