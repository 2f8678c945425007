#pragma once

// The four training losses and their weighted sum:
//   loss = loss_u + w_f loss_f + w_g loss_g + w_si loss_si
// All losses are sums over their index sets. The accumulate_* variants also add
// their gradients (scaled by the same factor as the value) into caller-owned
// buffers.

#include "sdpinn/autodiff.hpp"
#include "sdpinn/lowrank.hpp"
#include "sdpinn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace sdpinn {

struct LossWeights {
  double f = 0.1;
  double g = 1.0;
  double si = 1.0;

  void validate() const {
    if (f < 0.0 || g < 0.0 || si < 0.0) throw Error("loss weights must be non-negative");
  }
};

struct LossParts {
  double u = 0.0;
  double f = 0.0;
  double g = 0.0;
  double si = 0.0;
};

inline double total_loss(const LossParts& parts, const LossWeights& w) {
  return parts.u + w.f * parts.f + w.g * parts.g + w.si * parts.si;
}

/// Collocation points for the functional loss: every listed location at every
/// listed time step.
struct CollocationSet {
  std::vector<Location> locations;
  std::vector<int> steps;

  static CollocationSet all(const GridSpec& grid) {
    CollocationSet c;
    c.locations = Mask::full(grid.m1, grid.m2).locations();
    c.steps.resize(std::size_t(grid.t));
    for (int n = 0; n < grid.t; ++n) c.steps[std::size_t(n)] = n;
    return c;
  }

  void validate(const GridSpec& grid) const {
    if (locations.empty() || steps.empty()) throw Error("collocation set is empty");
    for (const auto& l : locations)
      if (l.row < 0 || l.col < 0 || l.row >= grid.m1 || l.col >= grid.m2)
        throw Error("collocation location (" + std::to_string(l.row) + "," +
                    std::to_string(l.col) + ") outside the grid");
    for (int n : steps)
      if (n < 0 || n >= grid.t) throw Error("collocation step " + std::to_string(n) + " outside the grid");
  }

  [[nodiscard]] std::size_t size() const { return locations.size() * steps.size(); }
};

/// One training measurement.
struct DataSample {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  double u = 0.0;
};

/// Gradient buffers matching the trainable parameters.
struct Gradients {
  MlpParams net;
  std::vector<FactorPair> factors;

  static Gradients zeros_like(const MlpParams& params, const CoefficientSet& coeffs) {
    Gradients g{MlpParams::zeros(params.config), {}};
    for (const auto& t : coeffs.terms)
      g.factors.push_back({Matrix::Zero(t.factors.u.rows(), t.factors.u.cols()),
                           Matrix::Zero(t.factors.v.rows(), t.factors.v.cols())});
    return g;
  }
};

/// Points per engine call; keeps channel matrices cache-resident.
inline constexpr Eigen::Index kChunk = 128;

namespace detail {

inline double term_value(const Jet2& j, PdeTerm term) {
  return term == PdeTerm::TimeDerivative ? j.d1[2] : j.d2[0] + j.d2[1];
}

inline std::vector<Matrix> compose_all(const CoefficientSet& coeffs) {
  std::vector<Matrix> out;
  for (const auto& t : coeffs.terms) out.push_back(t.factors.u * t.factors.v.transpose());
  return out;
}

// Adds dL/dLambda (dense) into the factor gradients: dU += G V, dV += G^T U.
inline void chain_to_factors(const Matrix& g, const FactorPair& f, FactorPair& out) {
  out.u.noalias() += g * f.v;
  out.v.noalias() += g.transpose() * f.u;
}

}  // namespace detail

/// PDE residual u_tt - sum_k lambda_k d_k at one point.
inline double pde_residual(const Jet2& jet, const CoefficientSet& coeffs,
                           std::span<const double> lambdas) {
  double r = jet.d2[2];
  for (std::size_t k = 0; k < coeffs.size(); ++k)
    r -= lambdas[k] * detail::term_value(jet, coeffs[k].term);
  return r;
}

/// Sum of squared residuals given jets already evaluated at `locations`.
inline double loss_f_from_jets(std::span<const Jet2> jets, std::span<const Location> locations,
                               const CoefficientSet& coeffs) {
  if (jets.size() != locations.size()) throw Error("loss_f: jets and locations differ in length");
  const auto lambda = detail::compose_all(coeffs);
  std::vector<double> at(coeffs.size());
  double s = 0.0;
  for (std::size_t p = 0; p < jets.size(); ++p) {
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      at[k] = lambda[k](locations[p].row, locations[p].col);
    const double r = pde_residual(jets[p], coeffs, at);
    s += r * r;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Data-fitting loss.

inline Matrix sample_coords(std::span<const DataSample> samples, std::size_t begin, std::size_t end) {
  Matrix c(3, Eigen::Index(end - begin));
  for (std::size_t k = begin; k < end; ++k) {
    c(0, Eigen::Index(k - begin)) = samples[k].x;
    c(1, Eigen::Index(k - begin)) = samples[k].y;
    c(2, Eigen::Index(k - begin)) = samples[k].t;
  }
  return c;
}

/// scale * sum (Net(x, y, t) - u)^2; gradient added to `grad` when non-null.
inline double accumulate_loss_u(const MlpParams& params, std::span<const DataSample> samples,
                                double scale, MlpParams* grad) {
  if (samples.empty()) throw Error("loss_u: empty batch");
  double total = 0.0;
  for (std::size_t b = 0; b < samples.size(); b += std::size_t(kChunk) * 4) {
    const std::size_t e = std::min(samples.size(), b + std::size_t(kChunk) * 4);
    const JetTrace tr = trace_jets(params, sample_coords(samples, b, e), JetOrder::ValueOnly);
    Matrix seeds(1, tr.batch);
    for (Eigen::Index k = 0; k < tr.batch; ++k) {
      const double r = tr.output(0, k) - samples[std::size_t(b) + std::size_t(k)].u;
      total += r * r;
      seeds(0, k) = 2.0 * scale * r;
    }
    if (grad) backpropagate(params, tr, seeds, *grad);
  }
  return scale * total;
}

inline double loss_u(const MlpParams& params, std::span<const DataSample> samples) {
  return accumulate_loss_u(params, samples, 1.0, nullptr);
}

// ---------------------------------------------------------------------------
// Functional (PDE residual) loss.

/// scale * sum over collocation points of (u_tt - sum_k Lambda_k o D_k)^2.
/// Gradients go to the network and, through Lambda_k = U_k V_k^T, the factors.
inline double accumulate_loss_f(const MlpParams& params, const CoefficientSet& coeffs,
                                const CollocationSet& colloc, const GridSpec& grid, double scale,
                                Gradients* grad) {
  colloc.validate(grid);
  coeffs.validate(grid.m1, grid.m2);
  const auto lambda = detail::compose_all(coeffs);
  const std::size_t n_points = colloc.size();
  const std::size_t K = coeffs.size();
  const auto n_chunks = int((n_points + std::size_t(kChunk) - 1) / std::size_t(kChunk));

  // Fixed partitions, reduced in order, so results do not depend on threads.
  const int partitions = std::min(8, n_chunks);
  struct Partial {
    double loss = 0.0;
    MlpParams net;
    std::vector<Matrix> lambda_grad;
  };
  std::vector<Partial> partial(static_cast<std::size_t>(partitions));

  auto point = [&](std::size_t p) {
    const std::size_t loc = p % colloc.locations.size();
    const std::size_t step = p / colloc.locations.size();
    return std::pair{colloc.locations[loc], colloc.steps[step]};
  };

  for_each_task(partitions, [&](int part) {
    Partial& out = partial[std::size_t(part)];
    if (grad) {
      out.net = MlpParams::zeros(params.config);
      out.lambda_grad.assign(K, Matrix::Zero(grid.m1, grid.m2));
    }
    std::vector<double> at(K);
    for (int c = part; c < n_chunks; c += partitions) {
      const std::size_t b = std::size_t(c) * std::size_t(kChunk);
      const std::size_t e = std::min(n_points, b + std::size_t(kChunk));
      const auto n = Eigen::Index(e - b);
      Matrix coords(3, n);
      for (std::size_t p = b; p < e; ++p) {
        const auto [loc, step] = point(p);
        coords(0, Eigen::Index(p - b)) = grid.x(loc.row);
        coords(1, Eigen::Index(p - b)) = grid.y(loc.col);
        coords(2, Eigen::Index(p - b)) = grid.time(step);
      }
      const JetTrace tr = trace_jets(params, coords, JetOrder::Second);
      Matrix seeds = Matrix::Zero(1, kJetChannels * n);
      for (Eigen::Index q = 0; q < n; ++q) {
        const auto [loc, step] = point(b + std::size_t(q));
        const Jet2 j = tr.jet(q);
        for (std::size_t k = 0; k < K; ++k) at[k] = lambda[k](loc.row, loc.col);
        const double r = pde_residual(j, coeffs, at);
        out.loss += r * r;
        if (!grad) continue;
        const double dr = 2.0 * scale * r;
        seeds(0, int(JetComponent::Dtt) * n + q) += dr;
        for (std::size_t k = 0; k < K; ++k) {
          if (coeffs[k].term == PdeTerm::TimeDerivative) {
            seeds(0, int(JetComponent::Dt) * n + q) -= dr * at[k];
          } else {
            seeds(0, int(JetComponent::Dxx) * n + q) -= dr * at[k];
            seeds(0, int(JetComponent::Dyy) * n + q) -= dr * at[k];
          }
          out.lambda_grad[k](loc.row, loc.col) -= dr * detail::term_value(j, coeffs[k].term);
        }
      }
      if (grad) backpropagate(params, tr, seeds, out.net);
    }
  });

  double total = 0.0;
  for (auto& p : partial) {
    total += p.loss;
    if (!grad) continue;
    for (int l = 0; l < params.layers(); ++l) {
      grad->net.weights[std::size_t(l)] += p.net.weights[std::size_t(l)];
      grad->net.biases[std::size_t(l)] += p.net.biases[std::size_t(l)];
    }
    for (std::size_t k = 0; k < K; ++k)
      detail::chain_to_factors(p.lambda_grad[k], coeffs[k].factors, grad->factors[k]);
  }
  return scale * total;
}

inline double loss_f(const MlpParams& params, const CoefficientSet& coeffs,
                     const CollocationSet& colloc, const GridSpec& grid) {
  return accumulate_loss_f(params, coeffs, colloc, grid, 1.0, nullptr);
}

// ---------------------------------------------------------------------------
// Given-coefficient loss.

/// sum_k sum_{(a,b) in Omega} (Lambda_k(a,b) - given_k(a,b))^2; `given[k]`
/// lists the known entries of term k.
inline double accumulate_loss_g(const CoefficientSet& coeffs,
                                const std::vector<SparseEntries>& given, double scale,
                                std::vector<FactorPair>* grad) {
  if (given.size() != coeffs.size())
    throw Error("loss_g: expected given entries for " + std::to_string(coeffs.size()) + " terms");
  double total = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const FactorPair& f = coeffs[k].factors;
    for (const auto& e : given[k]) {
      if (e.row < 0 || e.col < 0 || e.row >= f.u.rows() || e.col >= f.v.rows())
        throw Error("loss_g: given entry outside the grid");
      const double d = f.u.row(e.row).dot(f.v.row(e.col)) - e.value;
      total += d * d;
      if (grad) {
        const double g = 2.0 * scale * d;
        (*grad)[k].u.row(e.row) += g * f.v.row(e.col);
        (*grad)[k].v.row(e.col) += g * f.u.row(e.row);
      }
    }
  }
  return scale * total;
}

inline double loss_g(const CoefficientSet& coeffs, const std::vector<SparseEntries>& given) {
  return accumulate_loss_g(coeffs, given, 1.0, nullptr);
}

// ---------------------------------------------------------------------------
// Sign loss.

/// sum_k sum_ROI ReLU(-sign_k * Lambda_k(a,b)).
inline double accumulate_loss_si(const CoefficientSet& coeffs, double scale,
                                 std::vector<FactorPair>* grad) {
  double total = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const FactorPair& f = coeffs[k].factors;
    const double s = sign_factor(coeffs[k].sign);
    const Matrix lam = f.u * f.v.transpose();
    const Eigen::ArrayXXd viol = (-s * lam.array()).max(0.0);
    total += viol.sum();
    if (grad) {
      const Matrix g = ((-s * lam.array()) > 0.0).cast<double>().matrix() * (-s * scale);
      detail::chain_to_factors(g, f, (*grad)[k]);
    }
  }
  return scale * total;
}

inline double loss_si(const CoefficientSet& coeffs) {
  return accumulate_loss_si(coeffs, 1.0, nullptr);
}

}  // namespace sdpinn
