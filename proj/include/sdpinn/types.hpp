#pragma once

// Shared domain types: grid geometry, spatial masks, coefficient matrices and
// wave-field cubes.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sdpinn {

/// Raised when a caller violates an operation's documented precondition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GridSpec {
  int m1 = 30;  // rows, x axis
  int m2 = 30;  // columns, y axis
  int t = 198;  // time steps
  double dx = 0.1;
  double dy = 0.1;
  double dt = 0.01;

  void validate() const {
    if (m1 <= 0 || m2 <= 0 || t <= 0) throw Error("grid: counts must be positive");
    if (!(dx > 0.0) || !(dy > 0.0) || !(dt > 0.0)) throw Error("grid: spacings must be positive");
  }
  [[nodiscard]] std::size_t locations() const { return std::size_t(m1) * std::size_t(m2); }
  [[nodiscard]] std::size_t samples() const { return locations() * std::size_t(t); }

  // Physical coordinates fed to the network.
  [[nodiscard]] double x(int row) const { return row * dx; }
  [[nodiscard]] double y(int col) const { return col * dy; }
  [[nodiscard]] double time(int step) const { return step * dt; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Sign constraint carried by a coefficient term.
enum class Sign : std::uint8_t { NonNegative = 0x01, NonPositive = 0x02 };

inline const char* to_string(Sign s) {
  return s == Sign::NonNegative ? "non-negative" : "non-positive";
}

/// +1 for non-negative terms, -1 for non-positive ones.
inline double sign_factor(Sign s) { return s == Sign::NonNegative ? 1.0 : -1.0; }

struct Location {
  int row = 0;
  int col = 0;
  friend bool operator==(const Location&, const Location&) = default;
  friend auto operator<=>(const Location&, const Location&) = default;
};

/// Boolean M1 x M2 selection of spatial locations.
class Mask {
 public:
  Mask() = default;
  Mask(int m1, int m2, bool fill = false)
      : m1_(m1), m2_(m2), bits_(std::size_t(m1) * std::size_t(m2), fill ? 1 : 0) {
    if (m1 < 0 || m2 < 0) throw Error("mask: negative dimensions");
  }

  static Mask full(int m1, int m2) { return Mask(m1, m2, true); }

  [[nodiscard]] int rows() const { return m1_; }
  [[nodiscard]] int cols() const { return m2_; }

  [[nodiscard]] bool contains(int r, int c) const {
    return r >= 0 && c >= 0 && r < m1_ && c < m2_ && bits_[index(r, c)] != 0;
  }
  [[nodiscard]] bool operator()(int r, int c) const { return bits_[index(r, c)] != 0; }

  void set(int r, int c, bool on = true) {
    if (r < 0 || c < 0 || r >= m1_ || c >= m2_)
      throw Error("mask: location (" + std::to_string(r) + "," + std::to_string(c) +
                  ") outside " + std::to_string(m1_) + "x" + std::to_string(m2_));
    bits_[index(r, c)] = on ? 1 : 0;
  }

  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  [[nodiscard]] bool empty() const { return count() == 0; }

  /// Selected locations in row-major order.
  [[nodiscard]] std::vector<Location> locations() const {
    std::vector<Location> out;
    for (int r = 0; r < m1_; ++r)
      for (int c = 0; c < m2_; ++c)
        if (bits_[index(r, c)]) out.push_back({r, c});
    return out;
  }

  [[nodiscard]] Mask complement() const {
    Mask out(m1_, m2_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] ? 0 : 1;
    return out;
  }
  [[nodiscard]] Mask united(const Mask& o) const {
    check_same(o);
    Mask out(m1_, m2_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = (bits_[i] | o.bits_[i]);
    return out;
  }
  [[nodiscard]] Mask intersected(const Mask& o) const {
    check_same(o);
    Mask out(m1_, m2_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = (bits_[i] & o.bits_[i]);
    return out;
  }
  [[nodiscard]] Mask minus(const Mask& o) const { return intersected(o.complement()); }

  [[nodiscard]] const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  [[nodiscard]] std::size_t index(int r, int c) const { return std::size_t(r) * m2_ + c; }
  void check_same(const Mask& o) const {
    if (o.m1_ != m1_ || o.m2_ != m2_) throw Error("mask: dimension mismatch");
  }

  int m1_ = 0;
  int m2_ = 0;
  std::vector<std::uint8_t> bits_;
};

enum class CoefficientUnits : std::uint8_t { SpeedSquared, Attenuation, Unitless };

/// One M1 x M2 coefficient matrix (true field or estimate) with its sign tag.
struct CoefficientField {
  Matrix values;
  Sign sign = Sign::NonNegative;
  CoefficientUnits units = CoefficientUnits::Unitless;

  [[nodiscard]] int rows() const { return int(values.rows()); }
  [[nodiscard]] int cols() const { return int(values.cols()); }

  /// True when every entry honours the sign tag.
  [[nodiscard]] bool respects_sign() const {
    return sign == Sign::NonNegative ? (values.array() >= 0.0).all()
                                     : (values.array() <= 0.0).all();
  }
};

/// Field measurements U(row, col, step), stored with time contiguous.
class WaveField {
 public:
  WaveField() = default;
  explicit WaveField(GridSpec grid) : grid_(grid), data_(grid.samples(), 0.0) { grid.validate(); }

  [[nodiscard]] const GridSpec& grid() const { return grid_; }

  [[nodiscard]] double operator()(int r, int c, int n) const { return data_[index(r, c, n)]; }
  double& operator()(int r, int c, int n) { return data_[index(r, c, n)]; }

  /// Time series at one location.
  [[nodiscard]] const double* series(int r, int c) const { return data_.data() + index(r, c, 0); }

  [[nodiscard]] Matrix frame(int n) const {
    Matrix f(grid_.m1, grid_.m2);
    for (int r = 0; r < grid_.m1; ++r)
      for (int c = 0; c < grid_.m2; ++c) f(r, c) = (*this)(r, c, n);
    return f;
  }
  void set_frame(int n, const Matrix& f) {
    for (int r = 0; r < grid_.m1; ++r)
      for (int c = 0; c < grid_.m2; ++c) (*this)(r, c, n) = f(r, c);
  }

  [[nodiscard]] std::vector<double>& data() { return data_; }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }

 private:
  [[nodiscard]] std::size_t index(int r, int c, int n) const {
    return (std::size_t(r) * grid_.m2 + c) * grid_.t + n;
  }

  GridSpec grid_;
  std::vector<double> data_;
};

}  // namespace sdpinn
