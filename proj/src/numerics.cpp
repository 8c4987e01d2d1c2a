#include "usfspec/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "usfspec/errors.hpp"

namespace usfspec {

CVector to_eigen(std::span<const cplx> v) {
  CVector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

CVec to_std(const CVector& v) { return CVec(v.data(), v.data() + v.size()); }

namespace {

// exp(-j 2 pi r / grid) for the residue r = (n m) mod grid, keeping the
// argument small so large n m products do not lose phase accuracy.
cplx twiddle(std::size_t grid, std::size_t r) {
  return std::polar(1.0, -kTwoPi * static_cast<double>(r) / static_cast<double>(grid));
}

}  // namespace

CMatrix vandermonde(std::size_t grid, std::size_t rows, std::size_t cols) {
  if (grid < 1 || rows < 1 || cols < 1) throw ConfigError("vandermonde: dimensions must be positive");
  CMatrix v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t m = 0; m < cols; ++m)
      v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = twiddle(grid, (n * m) % grid);
  return v;
}

CMatrix vandermonde(std::size_t rows, std::size_t cols) { return vandermonde(rows, rows, cols); }

CVec dft(std::span<const cplx> g) {
  const std::size_t n_len = g.size();
  if (n_len == 0) throw ConfigError("dft: empty sequence");
  std::vector<cplx> tw(n_len);
  for (std::size_t r = 0; r < n_len; ++r) tw[r] = twiddle(n_len, r);
  CVec out(n_len);
  for (std::size_t m = 0; m < n_len; ++m) {
    cplx acc{0.0, 0.0};
    std::size_t r = 0;
    for (std::size_t n = 0; n < n_len; ++n) {
      acc += g[n] * tw[r];
      r += m;
      if (r >= n_len) r -= n_len;
    }
    out[m] = acc;
  }
  return out;
}

// ---- Polynomial ----

Polynomial Polynomial::from_roots(std::span<const cplx> roots) {
  CVec c{cplx(1.0, 0.0)};
  for (const auto& r : roots) {
    CVec next(c.size() + 1, cplx(0.0, 0.0));
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i + 1] += c[i];
      next[i] -= r * c[i];
    }
    c = std::move(next);
  }
  return Polynomial(std::move(c));
}

int Polynomial::degree() const {
  double cmax = 0.0;
  for (const auto& c : coeffs_) cmax = std::max(cmax, std::abs(c));
  if (cmax == 0.0) return -1;
  for (int d = static_cast<int>(coeffs_.size()) - 1; d >= 0; --d)
    if (std::abs(coeffs_[static_cast<std::size_t>(d)]) > 1e-14 * cmax) return d;
  return -1;
}

bool Polynomial::is_zero() const { return degree() < 0; }

Polynomial Polynomial::trimmed() const {
  const int d = degree();
  if (d < 0) return Polynomial(CVec{});
  return Polynomial(CVec(coeffs_.begin(), coeffs_.begin() + d + 1));
}

Polynomial Polynomial::derivative() const {
  if (coeffs_.size() <= 1) return Polynomial(CVec{cplx(0.0, 0.0)});
  CVec d(coeffs_.size() - 1);
  for (std::size_t i = 1; i < coeffs_.size(); ++i) d[i - 1] = static_cast<double>(i) * coeffs_[i];
  return Polynomial(std::move(d));
}

Polynomial Polynomial::reversed() const { return Polynomial(CVec(coeffs_.rbegin(), coeffs_.rend())); }

cplx Polynomial::operator()(cplx z) const {
  cplx acc{0.0, 0.0};
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * z + *it;
  return acc;
}

double Polynomial::l1_norm() const {
  double s = 0.0;
  for (const auto& c : coeffs_) s += std::abs(c);
  return s;
}

namespace {

// Parlett-Reinsch balancing by powers of two on the off-diagonal part.
void balance(CMatrix& m) {
  const Eigen::Index d = m.rows();
  const double gamma = 0.9;
  bool changed = true;
  int sweeps = 0;
  while (changed && sweeps++ < 100) {
    changed = false;
    for (Eigen::Index i = 0; i < d; ++i) {
      double row = 0.0, col = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        if (j == i) continue;
        row += std::abs(m(i, j));
        col += std::abs(m(j, i));
      }
      if (row == 0.0 || col == 0.0) continue;
      int exponent = 0;
      std::frexp(row / col, &exponent);
      exponent /= 2;
      if (exponent == 0) continue;
      const double scaled_col = std::ldexp(col, exponent);
      const double scaled_row = std::ldexp(row, -exponent);
      if (scaled_col + scaled_row < gamma * (col + row)) {
        changed = true;
        const double down = std::ldexp(1.0, -exponent);
        const double up = std::ldexp(1.0, exponent);
        for (Eigen::Index j = 0; j < d; ++j) {
          if (j == i) continue;
          m(i, j) *= down;
          m(j, i) *= up;
        }
      }
    }
  }
}

}  // namespace

CVec roots(const Polynomial& p) {
  const Polynomial t = p.trimmed();
  const int d = t.degree();
  if (d < 0) throw ConfigError("roots: zero polynomial");
  if (d == 0) return {};
  const CVec& c = t.coefficients();
  if (d == 1) return {-c[0] / c[1]};

  CMatrix comp = CMatrix::Zero(d, d);
  for (int i = 1; i < d; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < d; ++i) comp(i, d - 1) = -c[static_cast<std::size_t>(i)] / c[static_cast<std::size_t>(d)];
  balance(comp);
  Eigen::ComplexEigenSolver<CMatrix> es(comp, false);
  if (es.info() != Eigen::Success) throw IllConditionedError("roots: eigenvalue iteration failed");
  return to_std(es.eigenvalues());
}

CVector lstsq(const CMatrix& a, const CVector& b) {
  if (a.rows() != b.size()) throw ConfigError("lstsq: dimension mismatch");
  Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(a);
  return cod.solve(b);
}

namespace {

struct ProjectedSolve {
  CVector h;
  double kappa = 0.0;
  bool restart_needed = false;
};

// min ||P h||^2 s.t. h0^H h = 1, P = A projected off range(B).
ProjectedSolve solve_projected(const CMatrix& projected, const CVector& h0) {
  const Eigen::Index n = projected.cols();
  Eigen::JacobiSVD<CMatrix> svd(projected, Eigen::ComputeFullV);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  s.head(svd.singularValues().size()) = svd.singularValues();
  const CMatrix& v = svd.matrixV();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tol = 1e-13 * smax;

  std::vector<Eigen::Index> null_idx;
  for (Eigen::Index i = 0; i < n; ++i)
    if (s(i) <= tol) null_idx.push_back(i);

  ProjectedSolve out;
  const CVector coords = v.adjoint() * h0;
  if (null_idx.empty()) {
    CVector scaled = coords;
    for (Eigen::Index i = 0; i < n; ++i) scaled(i) /= s(i) * s(i);
    const CVector w = v * scaled;
    const double denom = h0.dot(w).real();
    if (!(denom > 0.0) || !std::isfinite(denom)) {
      out.h = h0 / h0.squaredNorm();
      out.restart_needed = true;
      return out;
    }
    out.h = w / denom;
    out.kappa = 1.0 / denom;
    return out;
  }
  CVector p = CVector::Zero(n);
  double denom = 0.0;
  for (auto i : null_idx) {
    p += v.col(i) * coords(i);
    denom += std::norm(coords(i));
  }
  if (denom <= 1e-24 * h0.squaredNorm()) {
    out.h = h0 / h0.squaredNorm();
    out.restart_needed = true;
    return out;
  }
  out.h = p / denom;
  out.kappa = (projected * out.h).squaredNorm();
  return out;
}

}  // namespace

ConstrainedUpdate constrained_lstsq_update(const CMatrix& a, const CMatrix& b, const CVector& h0) {
  if (a.rows() != b.rows()) throw ConfigError("constrained update: A and B row mismatch");
  if (a.cols() != h0.size()) throw ConfigError("constrained update: h0 length mismatch");
  ConstrainedUpdate out;
  Eigen::ColPivHouseholderQR<CMatrix> qr(b);
  if (qr.rank() < b.cols()) {
    out.h = h0 / h0.squaredNorm();
    out.q = CVector::Zero(b.cols());
    out.restart_needed = true;
    return out;
  }
  const CMatrix q_thin = qr.householderQ() * CMatrix::Identity(b.rows(), b.cols());
  const CMatrix projected = a - q_thin * (q_thin.adjoint() * a);
  ProjectedSolve ps = solve_projected(projected, h0);
  out.h = ps.h;
  out.kappa = ps.kappa;
  out.restart_needed = ps.restart_needed;
  const CVector ah = a * out.h;
  out.q = qr.solve(ah);
  out.objective = (ah - b * out.q).squaredNorm();
  return out;
}

ConstrainedUpdate constrained_lstsq_update_blocked(std::span<const CMatrix> a_blocks,
                                                   const CMatrix& b_block, const CVector& h0) {
  if (a_blocks.empty()) throw ConfigError("constrained update: no blocks");
  const Eigen::Index rows = b_block.rows();
  const Eigen::Index nh = h0.size();
  for (const auto& ab : a_blocks)
    if (ab.rows() != rows || ab.cols() != nh) throw ConfigError("constrained update: block shape mismatch");
  const auto blocks = static_cast<Eigen::Index>(a_blocks.size());
  const Eigen::Index kq = b_block.cols();

  ConstrainedUpdate out;
  Eigen::ColPivHouseholderQR<CMatrix> qr(b_block);
  if (qr.rank() < kq) {
    out.h = h0 / h0.squaredNorm();
    out.q = CVector::Zero(blocks * kq);
    out.restart_needed = true;
    return out;
  }
  const CMatrix q_thin = qr.householderQ() * CMatrix::Identity(rows, kq);
  CMatrix projected(blocks * rows, nh);
  for (Eigen::Index i = 0; i < blocks; ++i) {
    const CMatrix& ab = a_blocks[static_cast<std::size_t>(i)];
    projected.middleRows(i * rows, rows) = ab - q_thin * (q_thin.adjoint() * ab);
  }
  ProjectedSolve ps = solve_projected(projected, h0);
  out.h = ps.h;
  out.kappa = ps.kappa;
  out.restart_needed = ps.restart_needed;
  out.q.resize(blocks * kq);
  double obj = 0.0;
  for (Eigen::Index i = 0; i < blocks; ++i) {
    const CVector ah = a_blocks[static_cast<std::size_t>(i)] * out.h;
    const CVector qi = qr.solve(ah);
    out.q.segment(i * kq, kq) = qi;
    obj += (ah - b_block * qi).squaredNorm();
  }
  out.objective = obj;
  return out;
}

}  // namespace usfspec
