#pragma once

// Factorised coefficient estimates Lambda_k = U_k V_k^T and mask algebra.

#include "sdpinn/types.hpp"

#include <random>
#include <set>
#include <string>
#include <vector>

namespace sdpinn {

/// Factors of one coefficient matrix; the product has rank <= rank_budget.
struct FactorPair {
  Matrix u;  // M1 x r
  Matrix v;  // M2 x r

  [[nodiscard]] int rank_budget() const { return int(u.cols()); }
  void validate() const {
    if (u.cols() != v.cols())
      throw Error("factor pair: U has " + std::to_string(u.cols()) + " columns, V has " +
                  std::to_string(v.cols()));
    if (u.cols() < 1) throw Error("factor pair: rank budget must be >= 1");
  }
};

/// The PDE term a coefficient multiplies on the right-hand side.
enum class PdeTerm { TimeDerivative, Laplacian };

struct CoefficientTerm {
  FactorPair factors;
  Sign sign = Sign::NonNegative;
  PdeTerm term = PdeTerm::Laplacian;
  std::string label;
};

/// Every right-hand-side coefficient being recovered, k = 1..K.
struct CoefficientSet {
  std::vector<CoefficientTerm> terms;

  [[nodiscard]] std::size_t size() const { return terms.size(); }
  CoefficientTerm& operator[](std::size_t k) { return terms[k]; }
  const CoefficientTerm& operator[](std::size_t k) const { return terms[k]; }

  void validate(int m1, int m2) const {
    if (terms.empty()) throw Error("coefficient set: at least one term required");
    for (const auto& t : terms) {
      t.factors.validate();
      if (t.factors.u.rows() != m1 || t.factors.v.rows() != m2)
        throw Error("coefficient set: factors of '" + t.label + "' do not match the grid");
    }
  }
};

/// Dense product U V^T.
inline CoefficientField compose(const FactorPair& pair, Sign sign = Sign::NonNegative) {
  pair.validate();
  return {pair.u * pair.v.transpose(), sign, CoefficientUnits::Unitless};
}

inline CoefficientField compose(const CoefficientTerm& term) {
  return compose(term.factors, term.sign);
}

/// Entries i.i.d. N(0, 0.1^2), deterministic per seed.
inline FactorPair init_factors(const GridSpec& grid, int rank_budget, std::uint64_t seed,
                               double stddev = 0.1) {
  if (rank_budget < 1) throw Error("init_factors: rank budget must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  FactorPair p{Matrix(grid.m1, rank_budget), Matrix(grid.m2, rank_budget)};
  for (Eigen::Index i = 0; i < p.u.size(); ++i) p.u.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.v.size(); ++i) p.v.data()[i] = normal(rng);
  return p;
}

struct Coverage {
  int distinct_rows = 0;
  int distinct_cols = 0;
  int count = 0;
  friend bool operator==(const Coverage&, const Coverage&) = default;
};

inline Coverage coverage_stats(const Mask& mask) {
  std::set<int> rows, cols;
  int n = 0;
  for (const auto& loc : mask.locations()) {
    rows.insert(loc.row);
    cols.insert(loc.col);
    ++n;
  }
  return {int(rows.size()), int(cols.size()), n};
}

struct SparseEntry {
  int row = 0;
  int col = 0;
  double value = 0.0;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

using SparseEntries = std::vector<SparseEntry>;

/// Values of `field` at the masked locations (row-major order).
inline SparseEntries project(const Mask& mask, const CoefficientField& field) {
  if (mask.rows() != field.rows() || mask.cols() != field.cols())
    throw Error("project: mask and field dimensions differ");
  SparseEntries out;
  for (const auto& loc : mask.locations())
    out.push_back({loc.row, loc.col, field.values(loc.row, loc.col)});
  return out;
}

/// Dense M1 x M2 matrix holding `entries`, zero elsewhere.
inline Matrix densify(const SparseEntries& entries, int m1, int m2) {
  Matrix out = Matrix::Zero(m1, m2);
  for (const auto& e : entries) {
    if (e.row < 0 || e.col < 0 || e.row >= m1 || e.col >= m2)
      throw Error("densify: entry outside the grid");
    out(e.row, e.col) = e.value;
  }
  return out;
}

inline Mask support(const SparseEntries& entries, int m1, int m2) {
  Mask m(m1, m2);
  for (const auto& e : entries) m.set(e.row, e.col);
  return m;
}

}  // namespace sdpinn
