#pragma once

// Two reference recoveries that do not use a network:
//   baseline-1: Akima interpolation of missing traces, then per-location FD + OLS
//   baseline-2: FD + OLS where a full stencil was measured, then SVT completion

#include "sdpinn/lowrank.hpp"
#include "sdpinn/parallel.hpp"
#include "sdpinn/wavesim.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace sdpinn {

/// Central-difference derivatives at one interior location, time entries 1..T-2.
struct FdStencil {
  std::vector<double> ux, uxx, uy, uyy, ut, utt;

  [[nodiscard]] std::size_t size() const { return utt.size(); }
};

/// Requires 1 <= i <= M1-2 and 1 <= j <= M2-2; when `available` is given the
/// location and its four axis neighbours must be measured.
inline FdStencil fd_derivatives(const WaveField& field, int i, int j, const Mask* available = nullptr) {
  const GridSpec& g = field.grid();
  if (i < 1 || j < 1 || i > g.m1 - 2 || j > g.m2 - 2)
    throw Error("fd_derivatives: (" + std::to_string(i) + "," + std::to_string(j) +
                ") is not an interior location");
  if (g.t < 3) throw Error("fd_derivatives: need at least 3 time steps");
  if (available) {
    const int nb[5][2] = {{i, j}, {i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
    for (const auto& p : nb)
      if (!available->contains(p[0], p[1]))
        throw Error("fd_derivatives: no measurement at (" + std::to_string(p[0]) + "," +
                    std::to_string(p[1]) + ")");
  }
  const double* c = field.series(i, j);
  const double* up = field.series(i - 1, j);
  const double* dn = field.series(i + 1, j);
  const double* lf = field.series(i, j - 1);
  const double* rt = field.series(i, j + 1);
  const std::size_t n = std::size_t(g.t - 2);
  FdStencil s;
  for (auto* v : {&s.ux, &s.uxx, &s.uy, &s.uyy, &s.ut, &s.utt}) v->resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = k + 1;
    s.ux[k] = (dn[t] - up[t]) / (2.0 * g.dx);
    s.uxx[k] = (dn[t] - 2.0 * c[t] + up[t]) / (g.dx * g.dx);
    s.uy[k] = (rt[t] - lf[t]) / (2.0 * g.dy);
    s.uyy[k] = (rt[t] - 2.0 * c[t] + lf[t]) / (g.dy * g.dy);
    s.ut[k] = (c[t + 1] - c[t - 1]) / (2.0 * g.dt);
    s.utt[k] = (c[t + 1] - 2.0 * c[t] + c[t - 1]) / (g.dt * g.dt);
  }
  return s;
}

enum class RecoveryFlag { Ok, RankDeficient, Boundary, Ineligible, Given };

inline const char* to_string(RecoveryFlag f) {
  switch (f) {
    case RecoveryFlag::Ok: return "ok";
    case RecoveryFlag::RankDeficient: return "rank_deficient";
    case RecoveryFlag::Boundary: return "boundary";
    case RecoveryFlag::Ineligible: return "ineligible";
    case RecoveryFlag::Given: return "given";
  }
  return "?";
}

struct OlsResult {
  double alpha = 0.0;
  double c2 = 0.0;
  RecoveryFlag flag = RecoveryFlag::Ok;
};

/// Least squares u_tt = [-u_t, u_xx + u_yy] [alpha, c2]^T through the
/// pseudo-inverse. Without attenuation the -u_t column is left out and alpha is 0.
/// A (numerically) rank-deficient design is flagged; the minimum-norm solution
/// is still returned.
inline OlsResult ols_recover(const FdStencil& s, bool attenuating = true) {
  const auto n = Eigen::Index(s.size());
  if (n == 0) throw Error("ols_recover: empty stencil");
  const int cols = attenuating ? 2 : 1;
  Matrix phi(n, cols);
  Vector rhs(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (attenuating) phi(k, 0) = -s.ut[std::size_t(k)];
    phi(k, cols - 1) = s.uxx[std::size_t(k)] + s.uyy[std::size_t(k)];
    rhs[k] = s.utt[std::size_t(k)];
  }
  Eigen::JacobiSVD<Matrix> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  OlsResult out;
  const double smax = sv[0];
  if (!(smax > 0.0)) {
    out.flag = RecoveryFlag::RankDeficient;
    return out;
  }
  const double cut = 1e-10 * smax;
  if (sv[sv.size() - 1] <= cut) out.flag = RecoveryFlag::RankDeficient;
  Vector inv = Vector::Zero(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv[k] > cut) inv[k] = 1.0 / sv[k];
  const Vector x = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * rhs;
  if (attenuating) {
    out.alpha = x[0];
    out.c2 = x[1];
  } else {
    out.c2 = x[0];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Akima interpolation.

namespace detail {

// Hermite cubic on [x0, x1] with end slopes t0, t1.
inline double hermite(double x, double x0, double x1, double y0, double y1, double t0, double t1) {
  const double h = x1 - x0;
  const double s = (x - x0) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * t0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * t1;
}

// Node slopes: Akima's weighted average for n >= 5, averaged secants below that.
inline std::vector<double> node_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> m(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) m[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
  std::vector<double> t(n);
  if (n < 5) {
    t[0] = m[0];
    t[n - 1] = m[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) t[i] = 0.5 * (m[i - 1] + m[i]);
    return t;
  }
  // Secants padded with two linearly extrapolated values at each end.
  std::vector<double> e(n + 3);
  for (std::size_t i = 0; i + 1 < n; ++i) e[i + 2] = m[i];
  e[1] = 2 * e[2] - e[3];
  e[0] = 2 * e[1] - e[2];
  e[n + 1] = 2 * e[n] - e[n - 1];
  e[n + 2] = 2 * e[n + 1] - e[n];
  for (std::size_t i = 0; i < n; ++i) {
    // Node i sits between secants e[i+1] and e[i+2].
    const double w1 = std::abs(e[i + 3] - e[i + 2]);
    const double w2 = std::abs(e[i + 1] - e[i]);
    t[i] = (w1 + w2 > 0.0) ? (w1 * e[i + 1] + w2 * e[i + 2]) / (w1 + w2) : 0.5 * (e[i + 1] + e[i + 2]);
  }
  return t;
}

}  // namespace detail

/// Fills a line of length n from samples at increasing integer positions.
/// Outside the sampled span the end slope is extended linearly; one sample
/// gives a constant line.
inline std::vector<double> akima_line(const std::vector<int>& pos, const std::vector<double>& val, int n) {
  if (pos.size() != val.size()) throw Error("akima: positions and values differ in length");
  if (pos.empty()) throw Error("akima: no samples on the line");
  for (std::size_t k = 1; k < pos.size(); ++k)
    if (pos[k] <= pos[k - 1]) throw Error("akima: positions must increase");
  std::vector<double> out(static_cast<std::size_t>(n));
  if (pos.size() == 1) {
    std::fill(out.begin(), out.end(), val[0]);
    return out;
  }
  const std::vector<double> x(pos.begin(), pos.end());
  const std::vector<double> t = detail::node_slopes(x, val);
  const std::size_t last = pos.size() - 1;
  std::size_t seg = 0;
  for (int i = 0; i < n; ++i) {
    const double xi = i;
    if (xi <= x[0]) {
      out[std::size_t(i)] = val[0] + t[0] * (xi - x[0]);
    } else if (xi >= x[last]) {
      out[std::size_t(i)] = val[last] + t[last] * (xi - x[last]);
    } else {
      while (x[seg + 1] < xi) ++seg;
      out[std::size_t(i)] = detail::hermite(xi, x[seg], x[seg + 1], val[seg], val[seg + 1], t[seg], t[seg + 1]);
    }
  }
  for (std::size_t k = 0; k < pos.size(); ++k) out[std::size_t(pos[k])] = val[k];
  return out;
}

/// Row-wise and column-wise Akima reconstructions of the unmeasured entries,
/// averaged. A line without samples contributes nothing; cells missed by both
/// passes take the nearest measured value.
inline Matrix akima_interpolate_frame(const Matrix& frame, const Mask& available) {
  const int m1 = int(frame.rows()), m2 = int(frame.cols());
  if (available.rows() != m1 || available.cols() != m2)
    throw Error("akima: mask and frame dimensions differ");
  if (available.empty()) throw Error("akima: frame has no measurements");
  Matrix sum = Matrix::Zero(m1, m2);
  Eigen::MatrixXi hits = Eigen::MatrixXi::Zero(m1, m2);
  for (int r = 0; r < m1; ++r) {
    std::vector<int> pos;
    std::vector<double> val;
    for (int c = 0; c < m2; ++c)
      if (available(r, c)) {
        pos.push_back(c);
        val.push_back(frame(r, c));
      }
    if (pos.empty()) continue;
    const auto line = akima_line(pos, val, m2);
    for (int c = 0; c < m2; ++c) {
      sum(r, c) += line[std::size_t(c)];
      ++hits(r, c);
    }
  }
  for (int c = 0; c < m2; ++c) {
    std::vector<int> pos;
    std::vector<double> val;
    for (int r = 0; r < m1; ++r)
      if (available(r, c)) {
        pos.push_back(r);
        val.push_back(frame(r, c));
      }
    if (pos.empty()) continue;
    const auto line = akima_line(pos, val, m1);
    for (int r = 0; r < m1; ++r) {
      sum(r, c) += line[std::size_t(r)];
      ++hits(r, c);
    }
  }
  Matrix out(m1, m2);
  const auto measured = available.locations();
  for (int r = 0; r < m1; ++r)
    for (int c = 0; c < m2; ++c) {
      if (available(r, c)) {
        out(r, c) = frame(r, c);
      } else if (hits(r, c) > 0) {
        out(r, c) = sum(r, c) / hits(r, c);
      } else {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& l : measured) {
          const double d = double(l.row - r) * (l.row - r) + double(l.col - c) * (l.col - c);
          if (d < best) {
            best = d;
            out(r, c) = frame(l.row, l.col);
          }
        }
      }
    }
  return out;
}

/// Every frame reconstructed with akima_interpolate_frame.
inline WaveField interpolate_field(const WaveField& field, const Mask& available) {
  const GridSpec& g = field.grid();
  WaveField out(g);
  for_each_task(g.t, [&](int n) { out.set_frame(n, akima_interpolate_frame(field.frame(n), available)); });
  return out;
}

// ---------------------------------------------------------------------------
// Singular value thresholding.

struct SvtConfig {
  double tau = 1.0;
  double delta = 0.0;  // 0 selects 1.2 * M1 * M2 / |known|
  int max_iters = 500;
  double tol = 1e-4;

  void validate() const {
    if (tau < 0.0) throw Error("svt: tau must be >= 0");
    if (delta < 0.0) throw Error("svt: delta must be positive");
    if (max_iters < 1) throw Error("svt: max_iters must be >= 1");
    if (!(tol > 0.0)) throw Error("svt: tol must be positive");
  }
};

/// max(sigma - tau, 0) for each singular value.
inline Vector shrink(const Vector& sigma, double tau) { return (sigma.array() - tau).max(0.0).matrix(); }

/// D_tau(Y): singular value shrinkage of a matrix.
inline Matrix shrink_matrix(const Matrix& y, double tau) {
  Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * shrink(svd.singularValues(), tau).asDiagonal() * svd.matrixV().transpose();
}

struct SvtResult {
  Matrix x;
  int iterations = 0;
  double residual = 0.0;  // ||P(M - X)|| / ||P(M)||
  int rank = 0;
};

/// X^i = D_tau(Y^{i-1}), Y^i = Y^{i-1} + delta P(M - X^i), from Y^0 = 0.
inline SvtResult svt_complete(const SparseEntries& known, int m1, int m2, const SvtConfig& cfg) {
  cfg.validate();
  if (known.empty()) throw Error("svt: nothing to complete (no known entries)");
  const Matrix target = densify(known, m1, m2);
  const Mask omega = support(known, m1, m2);
  Matrix proj = Matrix::Zero(m1, m2);
  for (const auto& l : omega.locations()) proj(l.row, l.col) = 1.0;
  const double delta = cfg.delta > 0.0 ? cfg.delta : 1.2 * double(m1) * m2 / double(omega.count());
  const double norm = target.norm();
  if (norm == 0.0) return {Matrix::Zero(m1, m2), 0, 0.0, 0};

  Matrix y = Matrix::Zero(m1, m2);
  SvtResult out;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = shrink(svd.singularValues(), cfg.tau);
    out.x = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    out.rank = int((s.array() > 0.0).count());
    const Matrix r = proj.cwiseProduct(target - out.x);
    out.residual = r.norm() / norm;
    out.iterations = it;
    if (!std::isfinite(out.residual) || out.residual > 10.0)
      throw Error("svt: diverged at iteration " + std::to_string(it) + " with delta = " +
                  std::to_string(delta) + "; use a smaller delta");
    if (out.residual <= cfg.tol) break;
    y += delta * r;
  }
  return out;
}

/// Geometric tau grid between lo and hi (inclusive).
inline std::vector<double> tau_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw Error("tau grid: need 0 < lo <= hi and count >= 1");
  std::vector<double> out;
  for (int k = 0; k < count; ++k)
    out.push_back(count == 1 ? lo : lo * std::pow(hi / lo, double(k) / (count - 1)));
  return out;
}

struct TauTrial {
  double tau = 0.0;
  SvtResult result;
};

inline std::vector<TauTrial> svt_sweep(const SparseEntries& known, int m1, int m2, SvtConfig cfg,
                                       const std::vector<double>& taus) {
  std::vector<TauTrial> out(taus.size());
  const double delta0 = cfg.delta > 0.0 ? cfg.delta : 1.2 * double(m1) * m2 / double(support(known, m1, m2).count());
  for_each_task(int(taus.size()), [&](int k) {
    SvtConfig c = cfg;
    c.tau = taus[std::size_t(k)];
    c.delta = delta0;
    // halve the step until the iteration stays bounded; delta < 2 always does
    for (;;) {
      try {
        out[std::size_t(k)] = {c.tau, svt_complete(known, m1, m2, c)};
        return;
      } catch (const Error&) {
        if (c.delta < 2.0) throw;
        c.delta = std::max(0.5 * c.delta, 1.0);
      }
    }
  });
  return out;
}

/// The smallest-residual trial whose recovered rank does not exceed
/// `max_rank`; falls back to the lowest-rank trial.
inline const TauTrial& pick_tau(const std::vector<TauTrial>& trials, int max_rank) {
  if (trials.empty()) throw Error("svt: empty tau sweep");
  const TauTrial* best = nullptr;
  for (const auto& t : trials)
    if (t.result.rank <= max_rank && (!best || t.result.residual < best->result.residual)) best = &t;
  if (best) return *best;
  best = &trials.front();
  for (const auto& t : trials)
    if (t.result.rank < best->result.rank) best = &t;
  return *best;
}

// ---------------------------------------------------------------------------
// Pipelines.

struct LocationRecovery {
  int row = 0;
  int col = 0;
  double alpha = 0.0;
  double c2 = 0.0;
  RecoveryFlag flag = RecoveryFlag::Ok;
};

struct BaselineResult {
  CoefficientField alpha;  // physical alpha (non-negative tag)
  CoefficientField c2;
  Mask valid;              // entries that carry an estimate
  std::vector<LocationRecovery> locations;
  double tau = 0.0;        // baseline-2 only
};

namespace detail {

inline BaselineResult empty_result(const GridSpec& g) {
  BaselineResult r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.alpha = {Matrix::Constant(g.m1, g.m2, nan), Sign::NonNegative, CoefficientUnits::Attenuation};
  r.c2 = {Matrix::Constant(g.m1, g.m2, nan), Sign::NonNegative, CoefficientUnits::SpeedSquared};
  r.valid = Mask(g.m1, g.m2);
  return r;
}

}  // namespace detail

/// Interpolates unmeasured traces frame by frame, then runs FD + OLS at every
/// interior location.
inline BaselineResult baseline1(const WaveField& field, const Mask& available, bool attenuating = true) {
  const GridSpec& g = field.grid();
  const WaveField full = available.count() == g.locations() ? field : interpolate_field(field, available);
  BaselineResult out = detail::empty_result(g);
  std::vector<LocationRecovery> recs(std::size_t(g.m1) * std::size_t(g.m2));
  for_each_task(g.m1, [&](int i) {
    for (int j = 0; j < g.m2; ++j) {
      LocationRecovery& rec = recs[std::size_t(i) * g.m2 + j];
      rec.row = i;
      rec.col = j;
      if (i == 0 || j == 0 || i == g.m1 - 1 || j == g.m2 - 1) {
        rec.flag = RecoveryFlag::Boundary;
        rec.alpha = rec.c2 = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const OlsResult r = ols_recover(fd_derivatives(full, i, j), attenuating);
      rec.alpha = r.alpha;
      rec.c2 = r.c2;
      rec.flag = r.flag;
    }
  });
  for (const auto& rec : recs) {
    if (rec.flag == RecoveryFlag::Ok) {
      out.alpha.values(rec.row, rec.col) = rec.alpha;
      out.c2.values(rec.row, rec.col) = rec.c2;
      out.valid.set(rec.row, rec.col);
    }
  }
  out.locations = std::move(recs);
  return out;
}

/// Interior locations measured together with their four axis neighbours.
inline Mask eligible_locations(const Mask& available) {
  const int m1 = available.rows(), m2 = available.cols();
  Mask out(m1, m2);
  for (int i = 1; i + 1 < m1; ++i)
    for (int j = 1; j + 1 < m2; ++j)
      if (available(i, j) && available(i - 1, j) && available(i + 1, j) && available(i, j - 1) &&
          available(i, j + 1))
        out.set(i, j);
  return out;
}

struct Baseline2Config {
  SvtConfig svt{};
  std::vector<double> taus;  // empty: a default grid scaled to the known values
  int max_rank = 5;
};

/// FD + OLS at eligible locations, merged with the given coefficients (given
/// values win), then completed by SVT per coefficient.
/// `given_alpha` / `given_c2` hold physical alpha and c^2 on Omega.
inline BaselineResult baseline2(const WaveField& field, const Mask& available,
                                const SparseEntries& given_alpha, const SparseEntries& given_c2,
                                const Baseline2Config& cfg, bool attenuating = true) {
  const GridSpec& g = field.grid();
  const Mask eligible = eligible_locations(available);
  if (eligible.empty() && given_c2.empty() && given_alpha.empty())
    throw Error("baseline2: nothing to complete (no eligible locations and no given coefficients)");

  BaselineResult out = detail::empty_result(g);
  const auto eligible_locs = eligible.locations();
  std::vector<OlsResult> ols(eligible_locs.size());
  for_each_task(int(eligible_locs.size()), [&](int k) {
    const auto l = eligible_locs[std::size_t(k)];
    ols[std::size_t(k)] = ols_recover(fd_derivatives(field, l.row, l.col, &available), attenuating);
  });

  Matrix ka = Matrix::Constant(g.m1, g.m2, std::numeric_limits<double>::quiet_NaN());
  Matrix kc = ka;
  std::vector<LocationRecovery> recs;
  for (std::size_t k = 0; k < eligible_locs.size(); ++k) {
    const auto l = eligible_locs[k];
    recs.push_back({l.row, l.col, ols[k].alpha, ols[k].c2, ols[k].flag});
    if (ols[k].flag != RecoveryFlag::Ok) continue;
    ka(l.row, l.col) = ols[k].alpha;
    kc(l.row, l.col) = ols[k].c2;
  }
  for (const auto& e : given_alpha) ka(e.row, e.col) = e.value;
  for (const auto& e : given_c2) kc(e.row, e.col) = e.value;
  Mask given_mask = support(given_c2, g.m1, g.m2).united(support(given_alpha, g.m1, g.m2));
  for (const auto& l : given_mask.locations()) {
    auto it = std::find_if(recs.begin(), recs.end(), [&](const auto& r) { return r.row == l.row && r.col == l.col; });
    if (it == recs.end()) recs.push_back({l.row, l.col, ka(l.row, l.col), kc(l.row, l.col), RecoveryFlag::Given});
    else it->flag = RecoveryFlag::Given, it->alpha = ka(l.row, l.col), it->c2 = kc(l.row, l.col);
  }

  auto complete = [&](const Matrix& known_dense, CoefficientField& dst) {
    SparseEntries known;
    for (int i = 0; i < g.m1; ++i)
      for (int j = 0; j < g.m2; ++j)
        if (std::isfinite(known_dense(i, j))) known.push_back({i, j, known_dense(i, j)});
    if (known.empty()) throw Error("baseline2: nothing to complete for one coefficient");
    std::vector<double> taus = cfg.taus;
    if (taus.empty()) {
      // Scale the default grid to the size of a full matrix with the known values' magnitude.
      double rms = 0.0;
      for (const auto& e : known) rms += e.value * e.value;
      rms = std::sqrt(rms / double(known.size()));
      const double full_norm = std::max(rms, 1e-12) * std::sqrt(double(g.m1) * g.m2);
      taus = tau_grid(0.02 * full_norm, 2.0 * full_norm, 9);
    }
    const auto trials = svt_sweep(known, g.m1, g.m2, cfg.svt, taus);
    const TauTrial& best = pick_tau(trials, cfg.max_rank);
    dst.values = best.result.x;
    return best.tau;
  };
  if (attenuating) out.tau = complete(ka, out.alpha);
  else out.alpha.values.setZero();
  out.tau = complete(kc, out.c2);
  out.valid = Mask::full(g.m1, g.m2);
  out.locations = std::move(recs);
  return out;
}

}  // namespace sdpinn
