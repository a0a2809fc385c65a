#include "sosmas/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "sosmas/errors.hpp"

namespace sosmas::sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(SdpStatus status) {
  switch (status) {
    case SdpStatus::Optimal:
      return "optimal";
    case SdpStatus::Infeasible:
      return "infeasible";
    case SdpStatus::Unbounded:
      return "unbounded";
    case SdpStatus::MaxIterations:
      return "max_iterations";
    case SdpStatus::NumericalFailure:
      return "numerical_failure";
  }
  return "unknown";
}

namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DataError(std::string("non-finite value in ") + what);
}

void validate_functional(const SdpProblem& p, const LinearFunctional& f, const char* what) {
  const int nb = static_cast<int>(p.block_sizes.size());
  for (const auto& t : f.block_terms) {
    if (t.block < 0 || t.block >= nb) throw IndexError(std::string("block index out of range in ") + what);
    const int n = p.block_sizes[static_cast<std::size_t>(t.block)];
    if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n) {
      throw IndexError(std::string("block entry out of range in ") + what);
    }
    check_finite(t.value, what);
  }
  for (const auto& t : f.free_terms) {
    if (t.index < 0 || t.index >= p.free_count) {
      throw IndexError(std::string("free variable index out of range in ") + what);
    }
    check_finite(t.value, what);
  }
}

MatrixXd symmetric_matrix(int n, const LinearFunctional& f, int block) {
  MatrixXd a = MatrixXd::Zero(n, n);
  for (const auto& t : f.block_terms) {
    if (t.block != block) continue;
    a(t.row, t.col) += t.value;
    if (t.row != t.col) a(t.col, t.row) += t.value;
  }
  return a;
}

double apply(const LinearFunctional& f, const std::vector<MatrixXd>& x, const VectorXd& w) {
  double sum = 0.0;
  for (const auto& t : f.block_terms) {
    const auto& xb = x[static_cast<std::size_t>(t.block)];
    sum += t.value * xb(t.row, t.col);
    if (t.row != t.col) sum += t.value * xb(t.col, t.row);
  }
  for (const auto& t : f.free_terms) sum += t.value * w(t.index);
  return sum;
}

double min_eigenvalue(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_eigenvalue(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(m.rows() - 1);
}

// ---------------------------------------------------------------------------
// Internal standard form:  min c^T x  s.t.  A x = b,  x in S+ x ... x R^f.
// Rows are presolved and equilibrated; free columns are reduced to a basis of
// the row space of A_f.

struct Entry {
  int row;
  int r;
  int c;
  double v;
};

struct BlockData {
  int n = 0;
  std::vector<Entry> entries;    // both triangles, sorted by row
  std::vector<int> row_begin;    // per entry: index of the first entry in its row
  MatrixXd c;
};

struct Standard {
  int m = 0;
  std::vector<BlockData> blocks;
  MatrixXd af;  // m x nf
  VectorXd cf;
  VectorXd b;
  std::vector<int> kept_rows;
  VectorXd row_scale;
  MatrixXd free_map;  // original free = free_map * z
};

struct Iterate {
  std::vector<MatrixXd> x;
  std::vector<MatrixXd> s;
  VectorXd xf;
  VectorXd y;
  double tau = 1.0;
  double kappa = 1.0;
};

VectorXd apply_a(const Standard& sf, const std::vector<MatrixXd>& x, const VectorXd& xf) {
  VectorXd out = VectorXd::Zero(sf.m);
  for (std::size_t k = 0; k < sf.blocks.size(); ++k) {
    const auto& xb = x[k];
    for (const auto& e : sf.blocks[k].entries) out(e.row) += e.v * xb(e.r, e.c);
  }
  if (sf.af.cols() > 0) out += sf.af * xf;
  return out;
}

std::vector<MatrixXd> apply_at(const Standard& sf, const VectorXd& y) {
  std::vector<MatrixXd> out;
  out.reserve(sf.blocks.size());
  for (const auto& blk : sf.blocks) {
    MatrixXd s = MatrixXd::Zero(blk.n, blk.n);
    for (const auto& e : blk.entries) s(e.r, e.c) += e.v * y(e.row);
    out.push_back(std::move(s));
  }
  return out;
}

double inner(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += a[k].cwiseProduct(b[k]).sum();
  return sum;
}

double frob_norm(const std::vector<MatrixXd>& a) {
  double sum = 0.0;
  for (const auto& m : a) sum += m.squaredNorm();
  return std::sqrt(sum);
}

struct PresolveOutcome {
  bool infeasible = false;
  bool unbounded = false;
  VectorXd certificate;  // over original rows, b^T y = 1
  Standard sf;
  int removed = 0;
};

// Column key: block entries use their upper-triangle position, free columns
// follow all blocks.
PresolveOutcome presolve(const SdpProblem& p) {
  PresolveOutcome out;
  const int nb = static_cast<int>(p.block_sizes.size());
  const int m0 = static_cast<int>(p.equalities.size());
  std::vector<std::int64_t> offset(static_cast<std::size_t>(nb) + 1, 0);
  for (int k = 0; k < nb; ++k) {
    const std::int64_t n = p.block_sizes[static_cast<std::size_t>(k)];
    offset[static_cast<std::size_t>(k) + 1] = offset[static_cast<std::size_t>(k)] + n * n;
  }
  const std::int64_t free_offset = offset.back();

  // Functional coefficient on each upper-triangle unknown (2v off diagonal).
  std::vector<std::map<std::int64_t, double>> rows(static_cast<std::size_t>(m0));
  VectorXd b0(m0);
  for (int i = 0; i < m0; ++i) {
    const auto& eq = p.equalities[static_cast<std::size_t>(i)];
    b0(i) = eq.rhs;
    auto& row = rows[static_cast<std::size_t>(i)];
    for (const auto& t : eq.lhs.block_terms) {
      const int r = std::min(t.row, t.col);
      const int c = std::max(t.row, t.col);
      const std::int64_t n = p.block_sizes[static_cast<std::size_t>(t.block)];
      row[offset[static_cast<std::size_t>(t.block)] + r * n + c] += (r == c ? 1.0 : 2.0) * t.value;
    }
    for (const auto& t : eq.lhs.free_terms) row[free_offset + t.index] += t.value;
    for (auto it = row.begin(); it != row.end();) {
      it = it->second == 0.0 ? row.erase(it) : std::next(it);
    }
  }

  const double b_scale = 1.0 + b0.lpNorm<Eigen::Infinity>();
  std::vector<char> keep(static_cast<std::size_t>(m0), 1);
  for (int i = 0; i < m0; ++i) {
    if (!rows[static_cast<std::size_t>(i)].empty()) continue;
    if (std::abs(b0(i)) > 1e-12 * b_scale) {
      out.infeasible = true;
      out.certificate = VectorXd::Zero(m0);
      out.certificate(i) = 1.0 / b0(i);
      return out;
    }
    keep[static_cast<std::size_t>(i)] = 0;
  }

  // Rows owning a column no other row touches cannot take part in a linear
  // dependency; the rest go through a rank-revealing QR.
  std::map<std::int64_t, int> column_count;
  for (int i = 0; i < m0; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    for (const auto& [col, v] : rows[static_cast<std::size_t>(i)]) ++column_count[col];
  }
  std::vector<int> shared;
  for (int i = 0; i < m0; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    bool has_private = false;
    for (const auto& [col, v] : rows[static_cast<std::size_t>(i)]) {
      if (column_count[col] == 1) {
        has_private = true;
        break;
      }
    }
    if (!has_private) shared.push_back(i);
  }
  if (shared.size() > 1) {
    std::map<std::int64_t, int> local;
    for (int i : shared) {
      for (const auto& [col, v] : rows[static_cast<std::size_t>(i)]) local.try_emplace(col, 0);
    }
    int next = 0;
    for (auto& [col, idx] : local) idx = next++;
    const int k = static_cast<int>(shared.size());
    MatrixXd bt = MatrixXd::Zero(next, k);  // columns are rows of A
    for (int j = 0; j < k; ++j) {
      for (const auto& [col, v] : rows[static_cast<std::size_t>(shared[static_cast<std::size_t>(j)])]) {
        bt(local[col], j) = v;
      }
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(bt);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    if (rank < k) {
      const auto& perm = qr.colsPermutation().indices();
      std::vector<int> indep;
      std::vector<int> dep;
      for (int j = 0; j < k; ++j) {
        (j < rank ? indep : dep).push_back(perm(j));
      }
      std::sort(indep.begin(), indep.end());
      MatrixXd basis(next, rank);
      VectorXd b_ind(rank);
      for (int j = 0; j < rank; ++j) {
        basis.col(j) = bt.col(indep[static_cast<std::size_t>(j)]);
        b_ind(j) = b0(shared[static_cast<std::size_t>(indep[static_cast<std::size_t>(j)])]);
      }
      Eigen::ColPivHouseholderQR<MatrixXd> bqr(basis);
      for (int j : dep) {
        const int row = shared[static_cast<std::size_t>(j)];
        const VectorXd coef = bqr.solve(VectorXd(bt.col(j)));
        const double implied = coef.dot(b_ind);
        const double mismatch = b0(row) - implied;
        const double scale = 1.0 + std::abs(b0(row)) + coef.cwiseAbs().dot(b_ind.cwiseAbs());
        if (std::abs(mismatch) > 1e-9 * scale) {
          out.infeasible = true;
          out.certificate = VectorXd::Zero(m0);
          out.certificate(row) = 1.0;
          for (int q = 0; q < rank; ++q) {
            out.certificate(shared[static_cast<std::size_t>(indep[static_cast<std::size_t>(q)])]) -= coef(q);
          }
          out.certificate /= mismatch;
          return out;
        }
        keep[static_cast<std::size_t>(row)] = 0;
      }
    }
  }

  Standard& sf = out.sf;
  for (int i = 0; i < m0; ++i) {
    if (keep[static_cast<std::size_t>(i)]) sf.kept_rows.push_back(i);
  }
  out.removed = m0 - static_cast<int>(sf.kept_rows.size());
  sf.m = static_cast<int>(sf.kept_rows.size());
  sf.b.resize(sf.m);
  sf.row_scale.resize(sf.m);

  // Row norms of the full symmetric coefficient matrices.
  for (int i = 0; i < sf.m; ++i) {
    const auto& row = rows[static_cast<std::size_t>(sf.kept_rows[static_cast<std::size_t>(i)])];
    double sq = 0.0;
    for (const auto& [col, v] : row) {
      if (col >= free_offset) {
        sq += v * v;
      } else {
        const auto blk = static_cast<int>(std::upper_bound(offset.begin(), offset.end(), col) - offset.begin()) - 1;
        const std::int64_t n = p.block_sizes[static_cast<std::size_t>(blk)];
        const std::int64_t local = col - offset[static_cast<std::size_t>(blk)];
        sq += (local / n == local % n) ? v * v : 0.5 * v * v;
      }
    }
    sf.row_scale(i) = std::sqrt(sq);
    sf.b(i) = b0(sf.kept_rows[static_cast<std::size_t>(i)]) / sf.row_scale(i);
  }

  sf.blocks.resize(static_cast<std::size_t>(nb));
  MatrixXd af_full = MatrixXd::Zero(sf.m, p.free_count);
  for (int k = 0; k < nb; ++k) {
    auto& blk = sf.blocks[static_cast<std::size_t>(k)];
    blk.n = p.block_sizes[static_cast<std::size_t>(k)];
    blk.c = -symmetric_matrix(blk.n, p.objective, k);
  }
  for (int i = 0; i < sf.m; ++i) {
    const auto& row = rows[static_cast<std::size_t>(sf.kept_rows[static_cast<std::size_t>(i)])];
    const double scale = sf.row_scale(i);
    for (const auto& [col, v] : row) {
      if (col >= free_offset) {
        af_full(i, static_cast<int>(col - free_offset)) = v / scale;
        continue;
      }
      const auto blk = static_cast<int>(std::upper_bound(offset.begin(), offset.end(), col) - offset.begin()) - 1;
      auto& bd = sf.blocks[static_cast<std::size_t>(blk)];
      const std::int64_t local = col - offset[static_cast<std::size_t>(blk)];
      const int r = static_cast<int>(local / bd.n);
      const int c = static_cast<int>(local % bd.n);
      if (r == c) {
        bd.entries.push_back({i, r, r, v / scale});
      } else {
        bd.entries.push_back({i, r, c, 0.5 * v / scale});
        bd.entries.push_back({i, c, r, 0.5 * v / scale});
      }
    }
  }
  for (auto& bd : sf.blocks) {
    std::stable_sort(bd.entries.begin(), bd.entries.end(),
                     [](const Entry& a, const Entry& b) { return a.row < b.row; });
    bd.row_begin.resize(bd.entries.size());
    for (std::size_t q = 0; q < bd.entries.size(); ++q) {
      bd.row_begin[q] = (q > 0 && bd.entries[q - 1].row == bd.entries[q].row) ? bd.row_begin[q - 1]
                                                                              : static_cast<int>(q);
    }
  }

  // Free columns: keep a basis of the column space, reject objectives with a
  // component along the null space.
  VectorXd cf_pub = VectorXd::Zero(p.free_count);
  for (const auto& t : p.objective.free_terms) cf_pub(t.index) += t.value;
  if (p.free_count > 0) {
    Eigen::JacobiSVD<MatrixXd> svd(af_full, Eigen::ComputeThinU | Eigen::ComputeFullV);
    svd.setThreshold(1e-10);
    const int rank = sf.m == 0 ? 0 : static_cast<int>(svd.rank());
    const MatrixXd& v = svd.matrixV();
    sf.free_map = v.leftCols(rank);
    const VectorXd null_part = v.rightCols(p.free_count - rank).transpose() * cf_pub;
    if (null_part.norm() > 1e-9 * (1.0 + cf_pub.norm())) {
      out.unbounded = true;
      return out;
    }
    sf.af = af_full * sf.free_map;
    sf.cf = -(sf.free_map.transpose() * cf_pub);
  } else {
    sf.free_map = MatrixXd::Zero(0, 0);
    sf.af = MatrixXd::Zero(sf.m, 0);
    sf.cf = VectorXd::Zero(0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling of one block: W = R R^T with R^{-1} x R^{-T} =
// R^T s R = diag(lambda).

struct Scaling {
  MatrixXd r;
  MatrixXd rinv;
  MatrixXd w;
  VectorXd lambda;
};

bool nt_scaling(const MatrixXd& x, const MatrixXd& s, Scaling& out) {
  Eigen::LLT<MatrixXd> lx(x);
  Eigen::LLT<MatrixXd> ls(s);
  if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) return false;
  const MatrixXd l1 = lx.matrixL();
  const MatrixXd l2 = ls.matrixL();
  Eigen::JacobiSVD<MatrixXd> svd(l2.transpose() * l1, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.lambda = svd.singularValues();
  if (out.lambda.minCoeff() <= 0.0 || !out.lambda.allFinite()) return false;
  const VectorXd inv_sqrt = out.lambda.cwiseSqrt().cwiseInverse();
  out.r = l1 * svd.matrixV() * inv_sqrt.asDiagonal();
  out.rinv = inv_sqrt.asDiagonal() * svd.matrixU().transpose() * l2.transpose();
  out.w = out.r * out.r.transpose();
  return true;
}

// Schur complement M_ij = <A_i, W A_j W> accumulated block by block.
void add_schur(const BlockData& bd, const MatrixXd& w, MatrixXd& m) {
  const auto& es = bd.entries;
  const std::size_t count = es.size();
  for (std::size_t p = 0; p < count; ++p) {
    const Entry& a = es[p];
    for (std::size_t q = static_cast<std::size_t>(bd.row_begin[p]); q < count; ++q) {
      const Entry& e = es[q];
      m(a.row, e.row) += a.v * e.v * w(a.r, e.r) * w(e.c, a.c);
    }
  }
}

class KktSolver {
 public:
  bool factor(const MatrixXd& m, const MatrixXd& af) {
    m_ = &m;
    af_ = &af;
    const int n = static_cast<int>(m.rows());
    const int nf = static_cast<int>(af.cols());
    rho_ = 0.0;
    MatrixXd mt = m;
    if (nf > 0 && n > 0) {
      const double md = std::max(m.diagonal().maxCoeff(), 1e-300);
      const double ad = std::max(af.rowwise().squaredNorm().maxCoeff(), 1e-300);
      rho_ = md / ad;
      mt.noalias() += rho_ * af * af.transpose();
    }
    double reg = 0.0;
    const double diag_max = n > 0 ? std::max(mt.diagonal().cwiseAbs().maxCoeff(), 1e-300) : 1.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      MatrixXd trial = mt;
      if (reg > 0.0) trial.diagonal().array() += reg;
      llt_.compute(trial);
      if (llt_.info() == Eigen::Success) break;
      reg = reg == 0.0 ? 1e-14 * diag_max : reg * 100.0;
      if (attempt == 7) return false;
    }
    if (nf > 0) {
      minv_af_ = llt_.solve(af);
      const MatrixXd schur = af.transpose() * minv_af_;
      schur_.compute(schur);
      if (schur_.info() != Eigen::Success) return false;
    }
    return true;
  }

  void solve(const VectorXd& r1, const VectorXd& r2, VectorXd& y, VectorXd& f) const {
    raw_solve(r1, r2, y, f);
    for (int k = 0; k < 3; ++k) {
      VectorXd e1 = r1 - (*m_) * y;
      VectorXd e2 = r2;
      if (f.size() > 0) {
        e1 -= (*af_) * f;
        e2 -= af_->transpose() * y;
      }
      const double err = std::sqrt(e1.squaredNorm() + e2.squaredNorm());
      if (!(err > 1e-15 * (1.0 + r1.norm() + r2.norm()))) break;
      VectorXd dy;
      VectorXd df;
      raw_solve(e1, e2, dy, df);
      y += dy;
      f += df;
    }
  }

 private:
  void raw_solve(const VectorXd& r1, const VectorXd& r2, VectorXd& y, VectorXd& f) const {
    if (af_->cols() == 0) {
      y = llt_.solve(r1);
      f = VectorXd::Zero(0);
      return;
    }
    const VectorXd r1p = r1 + rho_ * (*af_) * r2;
    const VectorXd t = llt_.solve(r1p);
    f = schur_.solve(af_->transpose() * t - r2);
    y = t - minv_af_ * f;
  }

  const MatrixXd* m_ = nullptr;
  const MatrixXd* af_ = nullptr;
  double rho_ = 0.0;
  Eigen::LLT<MatrixXd> llt_;
  Eigen::LDLT<MatrixXd> schur_;
  MatrixXd minv_af_;
};

struct Direction {
  std::vector<MatrixXd> dx;
  std::vector<MatrixXd> ds;
  std::vector<MatrixXd> dx_scaled;
  std::vector<MatrixXd> ds_scaled;
  VectorXd dxf;
  VectorXd dy;
  double dtau = 0.0;
  double dkappa = 0.0;
};

struct Residual {
  VectorXd rp;
  std::vector<MatrixXd> rdc;
  VectorXd rdf;
  double rg = 0.0;
};

class HsdSolver {
 public:
  HsdSolver(const Standard& sf, const SdpSettings& settings) : sf_(sf), settings_(settings) {}

  // Returns the internal outcome and leaves the final iterate in `it`.
  SdpStatus run(Iterate& it, int& iterations, const std::function<bool(const Iterate&)>& accept) {
    const int nb = static_cast<int>(sf_.blocks.size());
    it.x.clear();
    it.s.clear();
    int nu = 0;
    for (const auto& bd : sf_.blocks) {
      it.x.push_back(MatrixXd::Identity(bd.n, bd.n));
      it.s.push_back(MatrixXd::Identity(bd.n, bd.n));
      nu += bd.n;
    }
    it.xf = VectorXd::Zero(sf_.af.cols());
    it.y = VectorXd::Zero(sf_.m);
    it.tau = 1.0;
    it.kappa = 1.0;

    std::vector<MatrixXd> cc;
    for (const auto& bd : sf_.blocks) cc.push_back(bd.c);
    const double b_norm = sf_.b.norm();
    const double c_norm = std::sqrt(frob_norm(cc) * frob_norm(cc) + sf_.cf.squaredNorm());
    const double tol = settings_.tol;

    int stalls = 0;
    for (iterations = 0; iterations <= settings_.max_iter; ++iterations) {
      const Residual res = residual(it);
      const double pres = res.rp.norm() / it.tau / (1.0 + b_norm);
      const double dres =
          std::sqrt(frob_norm(res.rdc) * frob_norm(res.rdc) + res.rdf.squaredNorm()) / it.tau / (1.0 + c_norm);
      const double cx = inner(cc, it.x) + sf_.cf.dot(it.xf);
      const double by = sf_.b.dot(it.y);
      const double gap = std::abs(cx - by) / it.tau / (1.0 + std::abs(cx / it.tau) + std::abs(by / it.tau));

      if (pres <= tol && dres <= tol && gap <= tol && accept(it)) return SdpStatus::Optimal;

      if (by > 0.0) {
        std::vector<MatrixXd> aty = apply_at(sf_, it.y);
        for (int k = 0; k < nb; ++k) aty[static_cast<std::size_t>(k)] += it.s[static_cast<std::size_t>(k)];
        const double ray = std::sqrt(frob_norm(aty) * frob_norm(aty) +
                                     (sf_.af.cols() > 0 ? (sf_.af.transpose() * it.y).squaredNorm() : 0.0));
        if (ray / by <= tol) return SdpStatus::Infeasible;
      }
      if (cx < 0.0) {
        const double ray = apply_a(sf_, it.x, it.xf).norm();
        if (ray / -cx <= tol) return SdpStatus::Unbounded;
      }
      if (iterations == settings_.max_iter) break;

      // Scaling and reduced system.
      std::vector<Scaling> scal(static_cast<std::size_t>(nb));
      for (int k = 0; k < nb; ++k) {
        if (!nt_scaling(it.x[static_cast<std::size_t>(k)], it.s[static_cast<std::size_t>(k)],
                        scal[static_cast<std::size_t>(k)])) {
          return SdpStatus::NumericalFailure;
        }
      }
      MatrixXd m = MatrixXd::Zero(sf_.m, sf_.m);
      for (int k = 0; k < nb; ++k) {
        add_schur(sf_.blocks[static_cast<std::size_t>(k)], scal[static_cast<std::size_t>(k)].w, m);
      }
      m.triangularView<Eigen::StrictlyLower>() = m.transpose().triangularView<Eigen::StrictlyLower>();
      KktSolver kkt;
      if (!kkt.factor(m, sf_.af)) return SdpStatus::NumericalFailure;

      std::vector<MatrixXd> wcw;
      for (int k = 0; k < nb; ++k) {
        const auto& w = scal[static_cast<std::size_t>(k)].w;
        wcw.push_back(w * cc[static_cast<std::size_t>(k)] * w);
      }
      const VectorXd q1 = sf_.b + apply_a(sf_, wcw, VectorXd::Zero(sf_.af.cols()));
      VectorXd vy;
      VectorXd vf;
      kkt.solve(q1, sf_.cf, vy, vf);
      const double wcc = inner(cc, wcw);

      const double mu = (inner(it.x, it.s) + it.tau * it.kappa) / (nu + 1);

      // Predictor.
      std::vector<MatrixXd> rc(static_cast<std::size_t>(nb));
      for (int k = 0; k < nb; ++k) {
        const auto& lam = scal[static_cast<std::size_t>(k)].lambda;
        rc[static_cast<std::size_t>(k)] = (-lam.array().square()).matrix().asDiagonal();
      }
      Direction aff;
      direction(it, res, scal, cc, kkt, q1, vy, vf, wcc, 1.0, rc, -it.tau * it.kappa, aff);
      const double alpha_aff = std::min(1.0, max_step(it, scal, aff));
      const double sigma = std::pow(1.0 - alpha_aff, 3);

      // Corrector.
      for (int k = 0; k < nb; ++k) {
        const auto& lam = scal[static_cast<std::size_t>(k)].lambda;
        const auto& dxa = aff.dx_scaled[static_cast<std::size_t>(k)];
        const auto& dsa = aff.ds_scaled[static_cast<std::size_t>(k)];
        MatrixXd r = -0.5 * (dxa * dsa + dsa * dxa);
        r.diagonal().array() += sigma * mu - lam.array().square();
        rc[static_cast<std::size_t>(k)] = std::move(r);
      }
      const double rtk = sigma * mu - it.tau * it.kappa - aff.dtau * aff.dkappa;
      Direction dir;
      direction(it, res, scal, cc, kkt, q1, vy, vf, wcc, 1.0 - sigma, rc, rtk, dir);
      const double alpha = std::min(1.0, 0.99 * max_step(it, scal, dir));
      if (!(alpha > 1e-12) || !std::isfinite(alpha)) return SdpStatus::NumericalFailure;
      stalls = alpha < 1e-6 ? stalls + 1 : 0;
      if (stalls >= 5) return SdpStatus::NumericalFailure;

      for (int k = 0; k < nb; ++k) {
        auto& x = it.x[static_cast<std::size_t>(k)];
        auto& s = it.s[static_cast<std::size_t>(k)];
        x += alpha * dir.dx[static_cast<std::size_t>(k)];
        s += alpha * dir.ds[static_cast<std::size_t>(k)];
        x = 0.5 * (x + x.transpose()).eval();
        s = 0.5 * (s + s.transpose()).eval();
      }
      it.xf += alpha * dir.dxf;
      it.y += alpha * dir.dy;
      it.tau += alpha * dir.dtau;
      it.kappa += alpha * dir.dkappa;
      if (!(it.tau > 0.0) || !(it.kappa > 0.0) || !it.y.allFinite()) return SdpStatus::NumericalFailure;

      // Keep the homogeneous iterate at a moderate scale.
      const double scale = std::max(it.tau, it.kappa);
      if (scale > 1e6 || scale < 1e-6) {
        for (auto& x : it.x) x /= scale;
        for (auto& s : it.s) s /= scale;
        it.xf /= scale;
        it.y /= scale;
        it.tau /= scale;
        it.kappa /= scale;
      }
    }
    return SdpStatus::MaxIterations;
  }

 private:
  Residual residual(const Iterate& it) const {
    Residual r;
    r.rp = apply_a(sf_, it.x, it.xf) - it.tau * sf_.b;
    r.rdc = apply_at(sf_, it.y);
    for (std::size_t k = 0; k < r.rdc.size(); ++k) r.rdc[k] += it.s[k] - it.tau * sf_.blocks[k].c;
    r.rdf = sf_.af.transpose() * it.y - it.tau * sf_.cf;
    double cx = sf_.cf.dot(it.xf);
    for (std::size_t k = 0; k < it.x.size(); ++k) cx += sf_.blocks[k].c.cwiseProduct(it.x[k]).sum();
    r.rg = cx - sf_.b.dot(it.y) + it.kappa;
    return r;
  }

  void direction(const Iterate& it, const Residual& res, const std::vector<Scaling>& scal,
                 const std::vector<MatrixXd>& cc, const KktSolver& kkt, const VectorXd& q1,
                 const VectorXd& vy, const VectorXd& vf, double wcc, double eta,
                 const std::vector<MatrixXd>& rc, double rtk, Direction& d) const {
    const std::size_t nb = sf_.blocks.size();
    std::vector<MatrixXd> u(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      const auto& sc = scal[k];
      const auto& lam = sc.lambda;
      const int n = static_cast<int>(lam.size());
      MatrixXd t(n, n);
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) t(i, j) = 2.0 * rc[k](i, j) / (lam(i) + lam(j));
      }
      u[k] = sc.r * t * sc.r.transpose() + eta * sc.w * res.rdc[k] * sc.w;
    }
    const VectorXd p1 = -eta * res.rp - apply_a(sf_, u, VectorXd::Zero(sf_.af.cols()));
    const VectorXd p2 = -eta * res.rdf;
    VectorXd uy;
    VectorXd uf;
    kkt.solve(p1, p2, uy, uf);

    const double k0 = inner(cc, u);
    const VectorXd qb = q1 - 2.0 * sf_.b;
    const double num = -eta * res.rg - k0 - qb.dot(uy) - sf_.cf.dot(uf) - rtk / it.tau;
    const double den = qb.dot(vy) + sf_.cf.dot(vf) - wcc - it.kappa / it.tau;
    d.dtau = num / den;
    d.dy = uy + d.dtau * vy;
    d.dxf = uf + d.dtau * vf;
    d.dkappa = (rtk - it.kappa * d.dtau) / it.tau;

    const std::vector<MatrixXd> atdy = apply_at(sf_, d.dy);
    d.dx.resize(nb);
    d.ds.resize(nb);
    d.dx_scaled.resize(nb);
    d.ds_scaled.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      const auto& sc = scal[k];
      d.ds[k] = -eta * res.rdc[k] - atdy[k] + d.dtau * cc[k];
      d.dx[k] = u[k] + sc.w * (atdy[k] - d.dtau * cc[k]) * sc.w;
      d.dx_scaled[k] = sc.rinv * d.dx[k] * sc.rinv.transpose();
      d.ds_scaled[k] = sc.r.transpose() * d.ds[k] * sc.r;
    }
  }

  static double block_step(const VectorXd& lam, const MatrixXd& d) {
    const VectorXd is = lam.cwiseSqrt().cwiseInverse();
    MatrixXd t = is.asDiagonal() * d * is.asDiagonal();
    t = 0.5 * (t + t.transpose()).eval();
    const double e = min_eigenvalue(t);
    return e < 0.0 ? -1.0 / e : std::numeric_limits<double>::infinity();
  }

  double max_step(const Iterate& it, const std::vector<Scaling>& scal, const Direction& d) const {
    double a = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < scal.size(); ++k) {
      a = std::min(a, block_step(scal[k].lambda, d.dx_scaled[k]));
      a = std::min(a, block_step(scal[k].lambda, d.ds_scaled[k]));
    }
    if (d.dtau < 0.0) a = std::min(a, -it.tau / d.dtau);
    if (d.dkappa < 0.0) a = std::min(a, -it.kappa / d.dkappa);
    return a;
  }

  const Standard& sf_;
  const SdpSettings& settings_;
};

SdpSolution empty_solution(const SdpProblem& p) {
  SdpSolution s;
  for (int n : p.block_sizes) s.block_values.push_back(MatrixXd::Zero(n, n));
  s.free_values = VectorXd::Zero(p.free_count);
  s.dual_values = VectorXd::Zero(static_cast<int>(p.equalities.size()));
  return s;
}

void recover(const SdpProblem& p, const Standard& sf, const Iterate& it, SdpSolution& sol) {
  for (std::size_t k = 0; k < it.x.size(); ++k) sol.block_values[k] = it.x[k] / it.tau;
  if (p.free_count > 0 && sf.free_map.cols() > 0) sol.free_values = sf.free_map * it.xf / it.tau;
  sol.dual_values.setZero();
  for (int i = 0; i < sf.m; ++i) {
    sol.dual_values(sf.kept_rows[static_cast<std::size_t>(i)]) = -it.y(i) / it.tau / sf.row_scale(i);
  }
}

}  // namespace

void validate(const SdpProblem& problem, const SdpSettings& settings) {
  if (problem.free_count < 0) throw DimensionError("negative free variable count");
  for (int n : problem.block_sizes) {
    if (n <= 0) throw DimensionError("PSD block size must be positive");
    if (n > settings.max_block_size) {
      throw CapacityError("PSD block of size " + std::to_string(n) + " exceeds limit " +
                          std::to_string(settings.max_block_size));
    }
  }
  validate_functional(problem, problem.objective, "objective");
  for (const auto& eq : problem.equalities) {
    validate_functional(problem, eq.lhs, "equality");
    check_finite(eq.rhs, "equality right-hand side");
  }
}

double primal_objective(const SdpProblem& problem, const SdpSolution& solution) {
  return apply(problem.objective, solution.block_values, solution.free_values);
}

double dual_objective(const SdpProblem& problem, const SdpSolution& solution) {
  double sum = 0.0;
  for (std::size_t i = 0; i < problem.equalities.size(); ++i) {
    sum += problem.equalities[i].rhs * solution.dual_values(static_cast<int>(i));
  }
  return sum;
}

Residuals residuals(const SdpProblem& problem, const SdpSolution& solution) {
  const int m = static_cast<int>(problem.equalities.size());
  if (solution.block_values.size() != problem.block_sizes.size() ||
      solution.free_values.size() != problem.free_count || solution.dual_values.size() != m) {
    throw DimensionError("solution does not match problem dimensions");
  }
  Residuals r;
  VectorXd b(m);
  VectorXd ax(m);
  for (int i = 0; i < m; ++i) {
    const auto& eq = problem.equalities[static_cast<std::size_t>(i)];
    b(i) = eq.rhs;
    ax(i) = apply(eq.lhs, solution.block_values, solution.free_values);
  }
  r.primal = (ax - b).norm() / (1.0 + b.norm());

  const std::size_t nb = problem.block_sizes.size();
  double c_norm_sq = 0.0;
  double eig_violation = 0.0;
  for (std::size_t k = 0; k < nb; ++k) {
    const int n = problem.block_sizes[k];
    const MatrixXd c = symmetric_matrix(n, problem.objective, static_cast<int>(k));
    c_norm_sq += c.squaredNorm();
    MatrixXd z = -c;
    for (int i = 0; i < m; ++i) {
      const double lam = solution.dual_values(i);
      if (lam == 0.0) continue;
      for (const auto& t : problem.equalities[static_cast<std::size_t>(i)].lhs.block_terms) {
        if (t.block != static_cast<int>(k)) continue;
        z(t.row, t.col) += lam * t.value;
        if (t.row != t.col) z(t.col, t.row) += lam * t.value;
      }
    }
    eig_violation += std::max(0.0, -min_eigenvalue(z));
  }
  VectorXd free_res = VectorXd::Zero(problem.free_count);
  for (const auto& t : problem.objective.free_terms) {
    free_res(t.index) -= t.value;
    c_norm_sq += t.value * t.value;
  }
  for (int i = 0; i < m; ++i) {
    for (const auto& t : problem.equalities[static_cast<std::size_t>(i)].lhs.free_terms) {
      free_res(t.index) += solution.dual_values(i) * t.value;
    }
  }
  r.dual = (eig_violation + free_res.norm()) / (1.0 + std::sqrt(c_norm_sq));

  const double pobj = primal_objective(problem, solution);
  const double dobj = dual_objective(problem, solution);
  r.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
  return r;
}

FarkasCheck check_farkas(const SdpProblem& problem, const VectorXd& y) {
  const int m = static_cast<int>(problem.equalities.size());
  if (y.size() != m) throw DimensionError("certificate length differs from equality count");
  FarkasCheck out;
  out.max_eigenvalue = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) out.b_dot_y += problem.equalities[static_cast<std::size_t>(i)].rhs * y(i);
  for (std::size_t k = 0; k < problem.block_sizes.size(); ++k) {
    const int n = problem.block_sizes[k];
    MatrixXd z = MatrixXd::Zero(n, n);
    for (int i = 0; i < m; ++i) {
      for (const auto& t : problem.equalities[static_cast<std::size_t>(i)].lhs.block_terms) {
        if (t.block != static_cast<int>(k)) continue;
        z(t.row, t.col) += y(i) * t.value;
        if (t.row != t.col) z(t.col, t.row) += y(i) * t.value;
      }
    }
    out.max_eigenvalue = std::max(out.max_eigenvalue, max_eigenvalue(z));
  }
  if (problem.block_sizes.empty()) out.max_eigenvalue = 0.0;
  VectorXd f = VectorXd::Zero(problem.free_count);
  for (int i = 0; i < m; ++i) {
    for (const auto& t : problem.equalities[static_cast<std::size_t>(i)].lhs.free_terms) f(t.index) += y(i) * t.value;
  }
  out.free_residual = f.norm();
  return out;
}

SdpSolution solve(const SdpProblem& problem, const SdpSettings& settings) {
  validate(problem, settings);
  SdpSolution sol = empty_solution(problem);
  PresolveOutcome pre = presolve(problem);
  sol.removed_rows = pre.removed;
  if (pre.infeasible) {
    sol.status = SdpStatus::Infeasible;
    sol.dual_values = pre.certificate;
    sol.residuals = residuals(problem, sol);
    return sol;
  }
  if (pre.unbounded) {
    sol.status = SdpStatus::Unbounded;
    sol.residuals = residuals(problem, sol);
    return sol;
  }
  const Standard& sf = pre.sf;

  auto accept = [&](const Iterate& it) {
    SdpSolution trial = sol;
    recover(problem, sf, it, trial);
    const Residuals r = residuals(problem, trial);
    return r.primal <= settings.tol && r.dual <= settings.tol && r.gap <= settings.tol;
  };

  Iterate it;
  HsdSolver solver(sf, settings);
  int iterations = 0;
  const SdpStatus status = solver.run(it, iterations, accept);
  sol.iterations = iterations;
  sol.status = status;

  if (status == SdpStatus::Infeasible) {
    VectorXd y = VectorXd::Zero(static_cast<int>(problem.equalities.size()));
    const double by = sf.b.dot(it.y);
    for (int i = 0; i < sf.m; ++i) {
      y(sf.kept_rows[static_cast<std::size_t>(i)]) = it.y(i) / sf.row_scale(i) / by;
    }
    sol.dual_values = y;
  } else if (status != SdpStatus::Unbounded) {
    recover(problem, sf, it, sol);
  }
  sol.residuals = residuals(problem, sol);
  sol.primal_objective = primal_objective(problem, sol);
  sol.dual_objective = dual_objective(problem, sol);
  return sol;
}

// ---------------------------------------------------------------------------

namespace {

void write_functional(std::ostream& os, const LinearFunctional& f) {
  for (const auto& t : f.block_terms) {
    os << "B " << t.block << ' ' << t.row << ' ' << t.col << ' ' << t.value << '\n';
  }
  for (const auto& t : f.free_terms) os << "F " << t.index << ' ' << t.value << '\n';
}

}  // namespace

void write_problem(std::ostream& os, const SdpProblem& problem) {
  const auto old_precision = os.precision(17);
  os << "blocks " << problem.block_sizes.size();
  for (int n : problem.block_sizes) os << ' ' << n;
  os << "\nfree " << problem.free_count << "\nequalities " << problem.equalities.size() << '\n';
  os << "objective\n";
  write_functional(os, problem.objective);
  for (std::size_t i = 0; i < problem.equalities.size(); ++i) {
    os << "eq " << i << " rhs " << problem.equalities[i].rhs << '\n';
    write_functional(os, problem.equalities[i].lhs);
  }
  os << "end\n";
  os.precision(old_precision);
}

SdpProblem read_problem(std::istream& is) {
  SdpProblem p;
  std::string word;
  auto expect = [&](const char* w) {
    if (!(is >> word) || word != w) throw FormatError(std::string("SDP dump: expected '") + w + "'");
  };
  std::size_t nb = 0;
  expect("blocks");
  if (!(is >> nb)) throw FormatError("SDP dump: bad block count");
  p.block_sizes.resize(nb);
  for (auto& n : p.block_sizes) {
    if (!(is >> n)) throw FormatError("SDP dump: bad block size");
  }
  expect("free");
  if (!(is >> p.free_count)) throw FormatError("SDP dump: bad free count");
  std::size_t m = 0;
  expect("equalities");
  if (!(is >> m)) throw FormatError("SDP dump: bad equality count");
  expect("objective");
  LinearFunctional* current = &p.objective;
  while (is >> word) {
    if (word == "B") {
      BlockTerm t;
      if (!(is >> t.block >> t.row >> t.col >> t.value)) throw FormatError("SDP dump: bad B line");
      current->block_terms.push_back(t);
    } else if (word == "F") {
      FreeTerm t;
      if (!(is >> t.index >> t.value)) throw FormatError("SDP dump: bad F line");
      current->free_terms.push_back(t);
    } else if (word == "eq") {
      std::size_t idx = 0;
      Equality eq;
      std::string rhs_word;
      if (!(is >> idx >> rhs_word >> eq.rhs) || rhs_word != "rhs" || idx != p.equalities.size()) {
        throw FormatError("SDP dump: bad eq header");
      }
      p.equalities.push_back(std::move(eq));
      current = &p.equalities.back().lhs;
    } else if (word == "end") {
      if (p.equalities.size() != m) throw FormatError("SDP dump: equality count mismatch");
      validate(p, SdpSettings{.tol = 1e-8, .max_iter = 200, .max_block_size = std::numeric_limits<int>::max()});
      return p;
    } else {
      throw FormatError("SDP dump: unexpected token '" + word + "'");
    }
  }
  throw FormatError("SDP dump: missing 'end'");
}

}  // namespace sosmas::sdp
