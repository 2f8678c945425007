#pragma once

// Fully connected tanh network mapping (x, y, t) to a predicted measurement.

#include "sdpinn/types.hpp"

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace sdpinn {

struct MlpConfig {
  int layer_count = 5;
  int hidden_width = 200;
  static constexpr int input_dim = 3;
  static constexpr int output_dim = 1;

  /// Reduced architecture used by unit tests.
  static MlpConfig toy() { return {3, 16}; }

  void validate() const {
    if (layer_count < 2) throw Error("mlp: layer_count must be >= 2");
    if (hidden_width < 1) throw Error("mlp: hidden_width must be >= 1");
  }

  [[nodiscard]] int fan_in(int layer) const { return layer == 0 ? input_dim : hidden_width; }
  [[nodiscard]] int fan_out(int layer) const {
    return layer == layer_count - 1 ? output_dim : hidden_width;
  }

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

/// Weights and biases per layer. Layers 0..L-2 apply tanh, the last is affine.
struct MlpParams {
  MlpConfig config;
  std::vector<Matrix> weights;  // fan_out x fan_in
  std::vector<Vector> biases;   // fan_out

  [[nodiscard]] int layers() const { return int(weights.size()); }

  /// Total number of scalar parameters.
  [[nodiscard]] std::size_t size() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// Throws when shapes do not conform to `config` or an entry is not finite.
  void validate() const {
    config.validate();
    if (int(weights.size()) != config.layer_count || int(biases.size()) != config.layer_count)
      throw Error("mlp: expected " + std::to_string(config.layer_count) + " layers, got " +
                  std::to_string(weights.size()));
    for (int l = 0; l < config.layer_count; ++l) {
      if (weights[l].rows() != config.fan_out(l) || weights[l].cols() != config.fan_in(l) ||
          biases[l].size() != config.fan_out(l))
        throw Error("mlp: layer " + std::to_string(l + 1) + " shape mismatch");
      if (!weights[l].allFinite() || !biases[l].allFinite())
        throw Error("mlp: layer " + std::to_string(l + 1) + " has non-finite entries");
    }
  }

  static MlpParams zeros(const MlpConfig& config) {
    config.validate();
    MlpParams p;
    p.config = config;
    for (int l = 0; l < config.layer_count; ++l) {
      p.weights.push_back(Matrix::Zero(config.fan_out(l), config.fan_in(l)));
      p.biases.push_back(Vector::Zero(config.fan_out(l)));
    }
    return p;
  }
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases; deterministic per seed.
inline MlpParams init_params(const MlpConfig& config, std::uint64_t seed) {
  MlpParams p = MlpParams::zeros(config);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < config.layer_count; ++l) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / config.fan_in(l)));
    Matrix& w = p.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = normal(rng);
  }
  return p;
}

/// Plain forward evaluation of one input.
inline double forward(const MlpParams& params, const std::array<double, 3>& input) {
  Vector a = Eigen::Map<const Vector>(input.data(), 3);
  const int last = params.layers() - 1;
  for (int l = 0; l < last; ++l) {
    Vector z = params.weights[l] * a + params.biases[l];
    a = z.array().tanh().matrix();
  }
  return (params.weights[last] * a + params.biases[last])(0);
}

// Flat parameter ordering: for each layer, weights row-major then biases.

inline Vector flatten(const MlpParams& params) {
  Vector out(Eigen::Index(params.size()));
  Eigen::Index k = 0;
  for (int l = 0; l < params.layers(); ++l) {
    const Matrix& w = params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) out[k++] = w(r, c);
    for (Eigen::Index r = 0; r < params.biases[l].size(); ++r) out[k++] = params.biases[l][r];
  }
  return out;
}

inline void unflatten(const Vector& flat, MlpParams& params) {
  if (std::size_t(flat.size()) != params.size())
    throw Error("mlp: flat vector has " + std::to_string(flat.size()) + " entries, expected " +
                std::to_string(params.size()));
  Eigen::Index k = 0;
  for (int l = 0; l < params.layers(); ++l) {
    Matrix& w = params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < params.biases[l].size(); ++r) params.biases[l][r] = flat[k++];
  }
}

}  // namespace sdpinn
