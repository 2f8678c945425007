#pragma once

// Ground-truth coefficient fields and forward simulation of the damped wave
// equation U_tt + alpha U_t - c^2 (U_xx + U_yy) = 0.

#include "sdpinn/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace sdpinn {

namespace detail {

inline Vector singular_values(const Matrix& m) {
  return Eigen::BDCSVD<Matrix>(m).singularValues();
}

/// Numerical rank criterion: sigma_r / sigma_1 > 1e-6 and sigma_{r+1} / sigma_1 < 1e-10.
inline bool has_exact_rank(const Matrix& m, int rank) {
  const Vector s = singular_values(m);
  if (s.size() == 0 || s[0] == 0.0) return false;
  if (s[rank - 1] / s[0] <= 1e-6) return false;
  return rank >= s.size() || s[rank] / s[0] < 1e-10;
}

// Low-frequency profile: sin(2 pi f (i + 0.5) / n + phase).
inline Vector smooth_profile(int n, double cycles, double phase) {
  Vector v(n);
  for (int i = 0; i < n; ++i)
    v[i] = std::sin(2.0 * std::numbers::pi * cycles * (i + 0.5) / n + phase);
  return v;
}

}  // namespace detail

/// Random smooth field of exact rank `rank` with entries spanning [lo, hi].
///
/// Built as 1 1^T plus rank - 1 sinusoidal outer products. The affine map onto
/// [lo, hi] only rescales the terms and shifts the all-ones term, so the rank is
/// unchanged. Rank one fields are a positive outer product (or its negation)
/// whose extremes land on lo and hi.
inline CoefficientField make_lowrank_field(const GridSpec& grid, int rank, double lo, double hi,
                                           Sign sign, std::uint64_t seed) {
  grid.validate();
  const int m1 = grid.m1, m2 = grid.m2;
  if (rank < 1 || rank > std::min(m1, m2))
    throw Error("lowrank field: rank must lie in [1, " + std::to_string(std::min(m1, m2)) + "]");
  if (!(lo <= hi)) throw Error("lowrank field: empty value range");
  if (sign == Sign::NonNegative && lo < 0.0)
    throw Error("lowrank field: non-negative field cannot reach " + std::to_string(lo));
  if (sign == Sign::NonPositive && hi > 0.0)
    throw Error("lowrank field: non-positive field cannot reach " + std::to_string(hi));
  if (lo == 0.0 && hi == 0.0) throw Error("lowrank field: the zero matrix has rank 0");

  CoefficientField out;
  out.sign = sign;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> cycles(0.4, 1.4), phase(0.0, 2.0 * std::numbers::pi),
      weight(0.5, 1.0);

  if (lo == hi) {
    out.values = Matrix::Constant(m1, m2, lo);
    if (rank != 1) throw Error("lowrank field: a constant field has rank 1");
    return out;
  }

  if (rank == 1) {
    if (lo < 0.0 && hi > 0.0)
      throw Error("lowrank field: a rank-1 field cannot span a range crossing zero");
    // |entries| in [a^2, b^2] from profiles scaled into [a, b].
    const double small = std::sqrt(std::min(std::abs(lo), std::abs(hi)));
    const double large = std::sqrt(std::max(std::abs(lo), std::abs(hi)));
    auto to_range = [&](Vector v) {
      v.array() -= v.minCoeff();
      v /= v.maxCoeff();
      return Vector((small + (large - small) * v.array()).matrix());
    };
    const Vector u = to_range(detail::smooth_profile(m1, cycles(rng), phase(rng)));
    const Vector v = to_range(detail::smooth_profile(m2, cycles(rng), phase(rng)));
    out.values = (u * v.transpose())
                     .cwiseMax(std::min(std::abs(lo), std::abs(hi)))
                     .cwiseMin(std::max(std::abs(lo), std::abs(hi)));
    if (hi <= 0.0) out.values = -out.values;
    return out;
  }

  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix s = Matrix::Ones(m1, m2);
    for (int k = 1; k < rank; ++k) {
      // Distinct frequency bands keep the profiles linearly independent.
      const double fu = cycles(rng) + 0.5 * (k - 1), fv = cycles(rng) + 0.5 * (k - 1);
      s += weight(rng) * detail::smooth_profile(m1, fu, phase(rng)) *
           detail::smooth_profile(m2, fv, phase(rng)).transpose();
    }
    const double mn = s.minCoeff(), mx = s.maxCoeff();
    if (mx - mn < 1e-9) continue;
    Matrix x = (lo + (hi - lo) * ((s.array() - mn) / (mx - mn))).matrix();
    if (!detail::has_exact_rank(x, rank)) continue;
    // Clamp the affine map's rounding at the range ends.
    x = x.cwiseMax(lo).cwiseMin(hi);
    out.values = std::move(x);
    return out;
  }
  throw Error("lowrank field: could not draw a field of rank " + std::to_string(rank));
}

enum class InitialCondition { Zero, GaussianPulse };

/// Parameters of the seeded Gaussian-pulse initial condition.
struct PulseSpec {
  int min_count = 2;
  int max_count = 3;
  double min_width = 0.15;  // metres (standard deviation of the bump)
  double max_width = 0.3;
  double amplitude = 1.0;
};

/// Largest dt satisfying max(c) dt sqrt(1/dx^2 + 1/dy^2) <= 1.
inline double max_stable_dt(const CoefficientField& c2, const GridSpec& grid) {
  const double cmax = std::sqrt(std::max(0.0, c2.values.maxCoeff()));
  const double k = std::sqrt(1.0 / (grid.dx * grid.dx) + 1.0 / (grid.dy * grid.dy));
  return cmax > 0.0 ? 1.0 / (cmax * k) : std::numeric_limits<double>::infinity();
}

namespace detail {

// 5-point Laplacian with reflecting (zero-Neumann) ghost cells.
inline Matrix neumann_laplacian(const Matrix& u, double dx, double dy) {
  const Eigen::Index m1 = u.rows(), m2 = u.cols();
  Matrix lap(m1, m2);
  for (Eigen::Index j = 0; j < m2; ++j) {
    const Eigen::Index jl = j > 0 ? j - 1 : (m2 > 1 ? 1 : 0);
    const Eigen::Index jr = j + 1 < m2 ? j + 1 : (m2 > 1 ? m2 - 2 : 0);
    for (Eigen::Index i = 0; i < m1; ++i) {
      const Eigen::Index iu = i > 0 ? i - 1 : (m1 > 1 ? 1 : 0);
      const Eigen::Index id = i + 1 < m1 ? i + 1 : (m1 > 1 ? m1 - 2 : 0);
      lap(i, j) = (u(id, j) - 2.0 * u(i, j) + u(iu, j)) / (dx * dx) +
                  (u(i, jr) - 2.0 * u(i, j) + u(i, jl)) / (dy * dy);
    }
  }
  return lap;
}

inline Matrix gaussian_pulses(const GridSpec& grid, const PulseSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(spec.min_count, spec.max_count);
  const double lx = (grid.m1 - 1) * grid.dx, ly = (grid.m2 - 1) * grid.dy;
  std::uniform_real_distribution<double> cx(0.2 * lx, 0.8 * lx), cy(0.2 * ly, 0.8 * ly),
      width(spec.min_width, spec.max_width), sign(-1.0, 1.0);
  Matrix u = Matrix::Zero(grid.m1, grid.m2);
  const int n = count(rng);
  for (int p = 0; p < n; ++p) {
    const double x0 = cx(rng), y0 = cy(rng), w = width(rng);
    const double amp = spec.amplitude * (sign(rng) < 0.0 ? -1.0 : 1.0) * (0.6 + 0.4 * std::abs(sign(rng)));
    for (int i = 0; i < grid.m1; ++i)
      for (int j = 0; j < grid.m2; ++j) {
        const double r2 = std::pow(grid.x(i) - x0, 2) + std::pow(grid.y(j) - y0, 2);
        u(i, j) += amp * std::exp(-r2 / (2.0 * w * w));
      }
  }
  return u;
}

}  // namespace detail

/// Explicit leapfrog integration with centred damping:
///   (U+ - 2U + U-)/dt^2 + alpha (U+ - U-)/(2 dt) = c^2 lap(U)
/// started from rest. The first two frames (initial state and its bootstrap
/// step) are discarded, so the returned cube holds grid.t frames that satisfy
/// the centred-difference scheme at every interior time.
inline WaveField simulate(const CoefficientField& alpha, const CoefficientField& c2,
                          const GridSpec& grid, InitialCondition initial, std::uint64_t seed,
                          const PulseSpec& pulses = {}) {
  grid.validate();
  if (alpha.rows() != grid.m1 || alpha.cols() != grid.m2 || c2.rows() != grid.m1 ||
      c2.cols() != grid.m2)
    throw Error("simulate: coefficient fields must be " + std::to_string(grid.m1) + "x" +
                std::to_string(grid.m2));
  if ((alpha.values.array() < 0.0).any()) throw Error("simulate: alpha must be non-negative");
  if ((c2.values.array() < 0.0).any()) throw Error("simulate: c^2 must be non-negative");
  const double dt_max = max_stable_dt(c2, grid);
  if (grid.dt > dt_max) {
    std::ostringstream msg;
    msg << "simulate: CFL condition violated (dt = " << grid.dt
        << " s); maximum stable dt is " << dt_max << " s";
    throw Error(msg.str());
  }

  WaveField out(grid);
  if (initial == InitialCondition::Zero) return out;

  const double dt = grid.dt;
  const Eigen::ArrayXXd damp = alpha.values.array() * (0.5 * dt);
  const Eigen::ArrayXXd c2a = c2.values.array();

  Matrix prev = detail::gaussian_pulses(grid, pulses, seed);
  // Zero initial velocity: U^1 = U^0 + dt^2/2 c^2 lap(U^0).
  Matrix cur = prev + (0.5 * dt * dt * c2a * detail::neumann_laplacian(prev, grid.dx, grid.dy).array()).matrix();
  for (int n = 0; n < grid.t; ++n) {
    const Eigen::ArrayXXd lap = detail::neumann_laplacian(cur, grid.dx, grid.dy).array();
    Matrix next = ((2.0 * cur.array() - (1.0 - damp) * prev.array() + dt * dt * c2a * lap) /
                   (1.0 + damp))
                      .matrix();
    if (!next.allFinite()) throw Error("simulate: non-finite field at step " + std::to_string(n));
    out.set_frame(n, next);
    prev = std::move(cur);
    cur = std::move(next);
  }
  return out;
}

/// Population standard deviation over every entry of the cube.
inline double field_std(const WaveField& field) {
  const auto& d = field.data();
  const Eigen::Map<const Vector> v(d.data(), Eigen::Index(d.size()));
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().mean());
}

/// Adds i.i.d. N(0, (percent/100 * std(field))^2) noise.
inline WaveField add_noise(const WaveField& field, double percent, std::uint64_t seed) {
  if (percent < 0.0) throw Error("add_noise: percent must be non-negative");
  WaveField out = field;
  if (percent == 0.0) return out;
  const double sigma = percent / 100.0 * field_std(field);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.data()) v += noise(rng);
  return out;
}

enum class MaskKind { Full, RandomFraction, Diagonal, EvenGrid, Rbd, Boundary };

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "full") return MaskKind::Full;
  if (s == "random" || s == "random_fraction") return MaskKind::RandomFraction;
  if (s == "diagonal") return MaskKind::Diagonal;
  if (s == "grid" || s == "even_grid") return MaskKind::EvenGrid;
  if (s == "rbd") return MaskKind::Rbd;
  if (s == "boundary") return MaskKind::Boundary;
  throw Error("unknown mask kind '" + s + "'");
}

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Full: return "full";
    case MaskKind::RandomFraction: return "random_fraction";
    case MaskKind::Diagonal: return "diagonal";
    case MaskKind::EvenGrid: return "even_grid";
    case MaskKind::Rbd: return "rbd";
    case MaskKind::Boundary: return "boundary";
  }
  return "?";
}

namespace detail {

// rows x cols factorisation of `count` with rows <= cols as balanced as the
// grid allows.
inline std::pair<int, int> lattice_shape(int count, int m1, int m2) {
  for (int r = int(std::sqrt(double(count))); r >= 1; --r) {
    if (count % r != 0) continue;
    const int c = count / r;
    if (r <= m1 && c <= m2) return {r, c};
    if (c <= m1 && r <= m2) return {c, r};
  }
  throw Error("even_grid: cannot arrange " + std::to_string(count) + " points as a lattice on " +
              std::to_string(m1) + "x" + std::to_string(m2));
}

inline int lattice_index(int k, int n, int extent) {
  return int(std::floor((k + 0.5) * extent / double(n)));
}

}  // namespace detail

/// Samples a spatial mask.
///
/// `amount` is the fraction for RandomFraction and the point count for
/// EvenGrid; other kinds ignore it. RandomFraction draws round(amount * |pool|)
/// locations without replacement from `within` (default: the whole grid).
inline Mask sample_mask(const GridSpec& grid, MaskKind kind, double amount, std::uint64_t seed,
                        const Mask* within = nullptr) {
  grid.validate();
  const int m1 = grid.m1, m2 = grid.m2;
  Mask m(m1, m2);
  switch (kind) {
    case MaskKind::Full:
      return Mask::full(m1, m2);
    case MaskKind::Diagonal:
      for (int i = 0; i < std::min(m1, m2); ++i) m.set(i, i);
      return m;
    case MaskKind::Rbd:
      for (int i = 0; i < m1; ++i) m.set(i, m2 - 1);
      for (int j = 0; j < m2; ++j) m.set(m1 - 1, j);
      for (int i = 0; i < std::min(m1, m2); ++i) m.set(i, i);
      return m;
    case MaskKind::Boundary:
      for (int i = 0; i < m1; ++i) {
        m.set(i, 0);
        m.set(i, m2 - 1);
      }
      for (int j = 0; j < m2; ++j) {
        m.set(0, j);
        m.set(m1 - 1, j);
      }
      return m;
    case MaskKind::EvenGrid: {
      const int count = int(std::lround(amount));
      if (count < 1 || std::size_t(count) > grid.locations())
        throw Error("even_grid: count must lie in [1, M1*M2]");
      const auto [rows, cols] = detail::lattice_shape(count, m1, m2);
      for (int a = 0; a < rows; ++a)
        for (int b = 0; b < cols; ++b)
          m.set(detail::lattice_index(a, rows, m1), detail::lattice_index(b, cols, m2));
      return m;
    }
    case MaskKind::RandomFraction: {
      if (amount < 0.0 || amount > 1.0) throw Error("random_fraction: fraction must lie in [0, 1]");
      std::vector<Location> pool =
          within ? within->locations() : Mask::full(m1, m2).locations();
      const auto take = std::size_t(std::lround(amount * double(pool.size())));
      std::mt19937_64 rng(seed);
      // Partial Fisher-Yates.
      for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        m.set(pool[i].row, pool[i].col);
      }
      return m;
    }
  }
  throw Error("sample_mask: unknown kind");
}

}  // namespace sdpinn
