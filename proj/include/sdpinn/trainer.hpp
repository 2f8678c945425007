#pragma once

// Joint Adam optimisation of the network and every coefficient factor pair.

#include "sdpinn/losses.hpp"
#include "sdpinn/wavesim.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sdpinn {

/// Thrown when the total loss grows past the divergence guard.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  MlpConfig mlp{};
  int epochs = 5000;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights{};
  // When |I_m| * |I_t| exceeds the budget, each step uses `frames_per_step`
  // random time steps at every collocation location.
  std::size_t collocation_budget = 20000;
  int frames_per_step = 8;
  std::size_t data_batch = 4096;
  // Full-set loss evaluation cadence for full_history (0 disables).
  int history_every = 100;
  double divergence_factor = 1e6;
  // Fold an affine map of the grid box onto [-1, 1]^3 into the first layer at init.
  bool center_inputs = true;
  std::uint64_t seed = 1;

  void validate() const {
    mlp.validate();
    weights.validate();
    if (epochs < 0) throw Error("train: epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw Error("train: learning rate must be positive");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
      throw Error("train: Adam betas must lie in [0, 1)");
    if (frames_per_step < 1 || data_batch < 1) throw Error("train: batch sizes must be positive");
  }
};

/// Adam moment accumulators for one parameter block.
struct AdamMoments {
  Vector m;
  Vector v;
};

struct LossRecord {
  int epoch = 0;
  LossParts parts;
  double total = 0.0;
};

struct TrainState {
  MlpParams params;
  CoefficientSet coeffs;
  std::vector<AdamMoments> moments;  // one per block, see parameter_blocks()
  long step = 0;                     // Adam steps taken
  int epoch = 0;
  std::vector<LossRecord> history;       // per-step batch estimates
  std::vector<LossRecord> full_history;  // full-set evaluations
};

/// Trainable blocks in a fixed order: per layer weights then biases, then U_k, V_k.
inline std::vector<std::span<double>> parameter_blocks(MlpParams& net,
                                                       std::vector<FactorPair*> factors) {
  std::vector<std::span<double>> out;
  for (int l = 0; l < net.layers(); ++l) {
    out.emplace_back(net.weights[std::size_t(l)].data(), std::size_t(net.weights[std::size_t(l)].size()));
    out.emplace_back(net.biases[std::size_t(l)].data(), std::size_t(net.biases[std::size_t(l)].size()));
  }
  for (FactorPair* f : factors) {
    out.emplace_back(f->u.data(), std::size_t(f->u.size()));
    out.emplace_back(f->v.data(), std::size_t(f->v.size()));
  }
  return out;
}

inline std::vector<std::span<double>> parameter_blocks(TrainState& s) {
  std::vector<FactorPair*> f;
  for (auto& t : s.coeffs.terms) f.push_back(&t.factors);
  return parameter_blocks(s.params, f);
}

inline std::vector<std::span<double>> parameter_blocks(Gradients& g) {
  std::vector<FactorPair*> f;
  for (auto& p : g.factors) f.push_back(&p);
  return parameter_blocks(g.net, f);
}

/// One bias-corrected Adam update of every block:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
inline void adam_step(TrainState& state, Gradients& grads, const TrainConfig& cfg) {
  auto params = parameter_blocks(state);
  auto g = parameter_blocks(grads);
  if (params.size() != g.size()) throw Error("adam: gradient blocks do not match parameters");
  if (state.moments.empty()) {
    for (const auto& p : params)
      state.moments.push_back({Vector::Zero(Eigen::Index(p.size())), Vector::Zero(Eigen::Index(p.size()))});
  }
  if (state.moments.size() != params.size()) throw Error("adam: moment blocks do not match parameters");
  for (std::size_t b = 0; b < g.size(); ++b) {
    if (g[b].size() != params[b].size() || std::size_t(state.moments[b].m.size()) != params[b].size())
      throw Error("adam: block " + std::to_string(b) + " shape mismatch");
    for (double x : g[b])
      if (!std::isfinite(x)) throw Error("adam: non-finite gradient in block " + std::to_string(b));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, double(state.step));
  for (std::size_t b = 0; b < g.size(); ++b) {
    Eigen::Map<Vector> theta(params[b].data(), Eigen::Index(params[b].size()));
    Eigen::Map<const Vector> grad(g[b].data(), Eigen::Index(g[b].size()));
    Vector& m = state.moments[b].m;
    Vector& v = state.moments[b].v;
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
    theta.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
}

/// One coefficient term to recover.
struct TermSpec {
  PdeTerm term = PdeTerm::Laplacian;
  Sign sign = Sign::NonNegative;
  std::string label;
  int rank_budget = 5;
};

/// Right-hand side of U_tt = -alpha U_t + c^2 lap(U): K = 1 recovers c^2 only.
inline std::vector<TermSpec> wave_terms(bool attenuating, int rank_alpha, int rank_c2) {
  std::vector<TermSpec> t;
  if (attenuating) t.push_back({PdeTerm::TimeDerivative, Sign::NonPositive, "-alpha", rank_alpha});
  t.push_back({PdeTerm::Laplacian, Sign::NonNegative, "c2", rank_c2});
  return t;
}

/// Measurements available for training.
struct TrainingData {
  WaveField field;
  Mask available;  // Omega_u
  double noise_pct = 0.0;
};

struct TrainResult {
  TrainState state;
  std::vector<CoefficientField> lambda;  // composed estimates, one per term
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::vector<DataSample> training_samples(const TrainingData& data) {
  const GridSpec& g = data.field.grid();
  std::vector<DataSample> out;
  out.reserve(data.available.count() * std::size_t(g.t));
  for (const auto& loc : data.available.locations())
    for (int n = 0; n < g.t; ++n)
      out.push_back({g.x(loc.row), g.y(loc.col), g.time(n), data.field(loc.row, loc.col, n)});
  return out;
}

}  // namespace detail

/// Fresh state: He-initialised network and N(0, 0.1^2) factors.
inline TrainState initial_state(const GridSpec& grid, const std::vector<TermSpec>& terms,
                                const TrainConfig& cfg) {
  TrainState s;
  s.params = init_params(cfg.mlp, detail::mix_seed(cfg.seed, 0));
  if (cfg.center_inputs) {
    // first layer sees (x, y, t) mapped onto [-1, 1]
    const double half[3] = {0.5 * (grid.m1 - 1) * grid.dx, 0.5 * (grid.m2 - 1) * grid.dy,
                            0.5 * (grid.t - 1) * grid.dt};
    Matrix& w = s.params.weights[0];
    for (int k = 0; k < 3; ++k)
      if (half[k] > 0.0) w.col(k) /= half[k];
    const Vector mid = Eigen::Vector3d(half[0], half[1], half[2]);
    s.params.biases[0] = -w * mid;
  }
  for (std::size_t k = 0; k < terms.size(); ++k)
    s.coeffs.terms.push_back({init_factors(grid, terms[k].rank_budget, detail::mix_seed(cfg.seed, 1 + k)),
                              terms[k].sign, terms[k].term, terms[k].label});
  return s;
}

/// Every loss over its full index set (no sampling).
inline LossParts evaluate_full(const TrainState& s, const std::vector<DataSample>& samples,
                               const std::vector<SparseEntries>& given, const GridSpec& grid) {
  LossParts p;
  p.u = accumulate_loss_u(s.params, samples, 1.0, nullptr);
  p.f = accumulate_loss_f(s.params, s.coeffs, CollocationSet::all(grid), grid, 1.0, nullptr);
  p.g = accumulate_loss_g(s.coeffs, given, 1.0, nullptr);
  p.si = accumulate_loss_si(s.coeffs, 1.0, nullptr);
  return p;
}

using ProgressCallback = std::function<void(const TrainState&, const LossRecord&)>;

/// Runs `cfg.epochs` optimiser steps. Each step draws a data batch for loss_u
/// and (past the collocation budget) a subset of time steps for loss_f; the
/// sampled sums are rescaled to estimate the full-set sums.
inline TrainResult train(const TrainingData& data, const std::vector<SparseEntries>& given,
                         const std::vector<TermSpec>& terms, const TrainConfig& cfg,
                         const ProgressCallback& progress = {}) {
  cfg.validate();
  const GridSpec& grid = data.field.grid();
  if (data.available.rows() != grid.m1 || data.available.cols() != grid.m2)
    throw Error("train: measurement mask does not match the grid");
  if (data.available.empty()) throw Error("train: no available measurements");
  if (terms.empty()) throw Error("train: no coefficient terms");
  if (given.size() != terms.size()) throw Error("train: given entries must be listed per term");

  TrainResult result;
  TrainState& s = result.state;
  s = initial_state(grid, terms, cfg);

  const std::vector<DataSample> samples = detail::training_samples(data);
  const CollocationSet full = CollocationSet::all(grid);
  const bool sample_frames = full.size() > cfg.collocation_budget && cfg.frames_per_step < grid.t;
  const std::size_t frames = sample_frames ? std::size_t(cfg.frames_per_step) : full.steps.size();
  const double f_scale = double(full.steps.size()) / double(frames);
  const bool sample_data = samples.size() > cfg.data_batch;
  const std::size_t batch_size = sample_data ? cfg.data_batch : samples.size();
  const double u_scale = double(samples.size()) / double(batch_size);

  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 1000));
  std::vector<DataSample> batch(batch_size);
  std::vector<int> step_pool = full.steps;
  CollocationSet colloc = full;
  double initial_total = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.history_every > 0 && epoch % cfg.history_every == 0)
      s.full_history.push_back({epoch, evaluate_full(s, samples, given, grid), 0.0});

    if (sample_data) {
      std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
      for (auto& b : batch) b = samples[pick(rng)];
    } else {
      batch = samples;
    }
    if (sample_frames) {
      for (std::size_t i = 0; i < frames; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, step_pool.size() - 1);
        std::swap(step_pool[i], step_pool[pick(rng)]);
      }
      colloc.steps.assign(step_pool.begin(), step_pool.begin() + std::ptrdiff_t(frames));
    }

    Gradients grads = Gradients::zeros_like(s.params, s.coeffs);
    LossParts parts;
    auto check = [&](const char* term) {
      for (auto blk : parameter_blocks(grads))
        for (double x : blk)
          if (!std::isfinite(x))
            throw Error(std::string("train: non-finite gradient from ") + term + " at epoch " +
                        std::to_string(epoch));
    };
    parts.u = accumulate_loss_u(s.params, batch, u_scale, &grads.net);
    check("loss_u");
    if (cfg.weights.f > 0.0) {
      // Scale the functional loss by w_f inside so the gradient lands pre-weighted.
      parts.f = accumulate_loss_f(s.params, s.coeffs, colloc, grid, f_scale * cfg.weights.f, &grads) /
                cfg.weights.f;
      check("loss_f");
    } else {
      parts.f = accumulate_loss_f(s.params, s.coeffs, colloc, grid, f_scale, nullptr);
    }
    parts.g = accumulate_loss_g(s.coeffs, given, cfg.weights.g, &grads.factors) /
              (cfg.weights.g > 0.0 ? cfg.weights.g : 1.0);
    if (cfg.weights.g == 0.0) parts.g = accumulate_loss_g(s.coeffs, given, 1.0, nullptr);
    check("loss_g");
    parts.si = accumulate_loss_si(s.coeffs, cfg.weights.si, &grads.factors) /
               (cfg.weights.si > 0.0 ? cfg.weights.si : 1.0);
    if (cfg.weights.si == 0.0) parts.si = accumulate_loss_si(s.coeffs, 1.0, nullptr);
    check("loss_si");

    const LossRecord rec{epoch, parts, total_loss(parts, cfg.weights)};
    if (!std::isfinite(rec.total)) throw Error("train: non-finite loss at epoch " + std::to_string(epoch));
    if (epoch == 0) initial_total = rec.total;
    if (rec.total > cfg.divergence_factor * initial_total)
      throw DivergenceError("train: total loss " + std::to_string(rec.total) + " exceeds " +
                            std::to_string(cfg.divergence_factor) + "x its initial value " +
                            std::to_string(initial_total) + " at epoch " + std::to_string(epoch));
    s.history.push_back(rec);
    adam_step(s, grads, cfg);
    s.epoch = epoch + 1;
    if (progress) progress(s, rec);
  }
  if (cfg.history_every > 0 && cfg.epochs > 0)
    s.full_history.push_back({s.epoch, evaluate_full(s, samples, given, grid), 0.0});
  for (auto& r : s.full_history) r.total = total_loss(r.parts, cfg.weights);

  for (const auto& t : s.coeffs.terms) result.lambda.push_back(compose(t));
  return result;
}

}  // namespace sdpinn
