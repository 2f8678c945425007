#pragma once

// Error metrics, the binary and CSV file formats, and PPM heatmaps.

#include "sdpinn/baselines.hpp"
#include "sdpinn/trainer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sdpinn {

// ---------------------------------------------------------------------------
// Metrics.

/// Root mean squared entry-wise error over `region`.
inline double rmse(const Matrix& estimate, const Matrix& truth, const Mask& region) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw Error("rmse: estimate and truth differ in shape");
  if (region.rows() != truth.rows() || region.cols() != truth.cols())
    throw Error("rmse: region does not match the field");
  if (region.empty()) throw Error("rmse: empty region");
  double s = 0.0;
  for (const auto& l : region.locations()) {
    const double e = estimate(l.row, l.col) - truth(l.row, l.col);
    if (!std::isfinite(e))
      throw Error("rmse: no finite estimate at (" + std::to_string(l.row) + "," + std::to_string(l.col) + ")");
    s += e * e;
  }
  return std::sqrt(s / double(region.count()));
}

inline double rmse(const CoefficientField& estimate, const CoefficientField& truth, const Mask& region) {
  return rmse(estimate.values, truth.values, region);
}

/// Locations whose estimate is finite.
inline Mask finite_entries(const Matrix& m) {
  Mask out(int(m.rows()), int(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (std::isfinite(m(i, j))) out.set(i, j);
  return out;
}

/// Every location except the outermost ring.
inline Mask interior_mask(int m1, int m2) {
  Mask out(m1, m2);
  for (int i = 1; i + 1 < m1; ++i)
    for (int j = 1; j + 1 < m2; ++j) out.set(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Little-endian binary helpers.

namespace io {

template <class T>
void put(std::ostream& os, T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  std::array<unsigned char, sizeof(T)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(T)))
    throw Error(what + ": file is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

inline void put_magic(std::ostream& os, const char (&m)[5]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char (&m)[5], const std::string& what) {
  char buf[4] = {};
  if (!is.read(buf, 4)) throw Error(what + ": file is truncated");
  if (std::memcmp(buf, m, 4) != 0) throw Error(what + ": bad magic, expected '" + std::string(m) + "'");
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error("cannot open '" + p.string() + "'");
  return is;
}

inline std::uint32_t dim(int v) { return static_cast<std::uint32_t>(v); }

inline int checked_dim(std::uint32_t v, const std::string& what) {
  if (v == 0 || v > (1u << 24)) throw Error(what + ": implausible dimension " + std::to_string(v));
  return int(v);
}

}  // namespace io

constexpr std::uint32_t kFormatVersion = 1;

// SDPW: magic, version, M1, M2, T (u32), dx, dy, dt (f64), data in (row, col, time) order.
inline void write_wavefield(std::ostream& os, const WaveField& f) {
  const GridSpec& g = f.grid();
  io::put_magic(os, "SDPW");
  io::put(os, kFormatVersion);
  io::put(os, io::dim(g.m1));
  io::put(os, io::dim(g.m2));
  io::put(os, io::dim(g.t));
  io::put(os, g.dx);
  io::put(os, g.dy);
  io::put(os, g.dt);
  for (double v : f.data()) io::put(os, v);
}

inline WaveField read_wavefield(std::istream& is) {
  const std::string what = "wavefield";
  io::expect_magic(is, "SDPW", what);
  const auto version = io::get<std::uint32_t>(is, what);
  if (version != kFormatVersion) throw Error(what + ": unsupported version " + std::to_string(version));
  GridSpec g;
  g.m1 = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  g.m2 = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  g.t = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  g.dx = io::get<double>(is, what);
  g.dy = io::get<double>(is, what);
  g.dt = io::get<double>(is, what);
  WaveField f(g);
  for (double& v : f.data()) v = io::get<double>(is, what);
  return f;
}

// SDPC: magic, M1, M2 (u32), sign byte, values row-major.
inline void write_coefficients(std::ostream& os, const CoefficientField& c) {
  io::put_magic(os, "SDPC");
  io::put(os, io::dim(c.rows()));
  io::put(os, io::dim(c.cols()));
  io::put(os, static_cast<std::uint8_t>(c.sign));
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j) io::put(os, c.values(i, j));
}

inline CoefficientField read_coefficients(std::istream& is) {
  const std::string what = "coefficient field";
  io::expect_magic(is, "SDPC", what);
  const int m1 = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  const int m2 = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  const auto sign = io::get<std::uint8_t>(is, what);
  if (sign != 0x01 && sign != 0x02) throw Error(what + ": bad sign byte " + std::to_string(sign));
  CoefficientField c{Matrix(m1, m2), static_cast<Sign>(sign), CoefficientUnits::Unitless};
  for (int i = 0; i < m1; ++i)
    for (int j = 0; j < m2; ++j) c.values(i, j) = io::get<double>(is, what);
  return c;
}

// SDPM: magic, M1, M2 (u32), one 0/1 byte per location row-major.
inline void write_mask(std::ostream& os, const Mask& m) {
  io::put_magic(os, "SDPM");
  io::put(os, io::dim(m.rows()));
  io::put(os, io::dim(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) io::put(os, static_cast<std::uint8_t>(m(i, j) ? 1 : 0));
}

inline Mask read_mask(std::istream& is) {
  const std::string what = "mask";
  io::expect_magic(is, "SDPM", what);
  const int m1 = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  const int m2 = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  Mask m(m1, m2);
  for (int i = 0; i < m1; ++i)
    for (int j = 0; j < m2; ++j) {
      const auto b = io::get<std::uint8_t>(is, what);
      if (b > 1) throw Error(what + ": entries must be 0 or 1");
      if (b) m.set(i, j);
    }
  return m;
}

// SDPT: magic, version, layer_count, hidden_width, input_dim, output_dim (u32),
// parameters (f64, flatten() order); then K, M1, M2 (u32) and per term a sign
// byte, a term byte (0 = U_t, 1 = laplacian), r_k (u32), U and V row-major.
struct Checkpoint {
  MlpParams params;
  CoefficientSet coeffs;
};

inline void write_checkpoint(std::ostream& os, const MlpParams& params, const CoefficientSet& coeffs) {
  io::put_magic(os, "SDPT");
  io::put(os, kFormatVersion);
  io::put(os, io::dim(params.config.layer_count));
  io::put(os, io::dim(params.config.hidden_width));
  io::put(os, io::dim(MlpConfig::input_dim));
  io::put(os, io::dim(MlpConfig::output_dim));
  const Vector flat = flatten(params);
  for (Eigen::Index k = 0; k < flat.size(); ++k) io::put(os, flat[k]);
  const int m1 = coeffs.size() ? int(coeffs[0].factors.u.rows()) : 0;
  const int m2 = coeffs.size() ? int(coeffs[0].factors.v.rows()) : 0;
  io::put(os, io::dim(int(coeffs.size())));
  io::put(os, io::dim(m1));
  io::put(os, io::dim(m2));
  for (const auto& t : coeffs.terms) {
    if (t.factors.u.rows() != m1 || t.factors.v.rows() != m2)
      throw Error("checkpoint: factor shapes differ between terms");
    io::put(os, static_cast<std::uint8_t>(t.sign));
    io::put(os, static_cast<std::uint8_t>(t.term == PdeTerm::TimeDerivative ? 0 : 1));
    io::put(os, io::dim(t.factors.rank_budget()));
    for (const Matrix* m : {&t.factors.u, &t.factors.v})
      for (Eigen::Index i = 0; i < m->rows(); ++i)
        for (Eigen::Index j = 0; j < m->cols(); ++j) io::put(os, (*m)(i, j));
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  const std::string what = "checkpoint";
  io::expect_magic(is, "SDPT", what);
  const auto version = io::get<std::uint32_t>(is, what);
  if (version != kFormatVersion) throw Error(what + ": unsupported version " + std::to_string(version));
  MlpConfig cfg;
  cfg.layer_count = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  cfg.hidden_width = io::checked_dim(io::get<std::uint32_t>(is, what), what);
  if (io::get<std::uint32_t>(is, what) != MlpConfig::input_dim || io::get<std::uint32_t>(is, what) != MlpConfig::output_dim)
    throw Error(what + ": network must map 3 inputs to 1 output");
  cfg.validate();
  Checkpoint c;
  c.params = init_params(cfg, 0);
  Vector flat(Eigen::Index(c.params.size()));
  for (Eigen::Index k = 0; k < flat.size(); ++k) flat[k] = io::get<double>(is, what);
  unflatten(flat, c.params);
  const auto k = io::get<std::uint32_t>(is, what);
  const auto m1 = io::get<std::uint32_t>(is, what);
  const auto m2 = io::get<std::uint32_t>(is, what);
  if (k > 16) throw Error(what + ": implausible term count " + std::to_string(k));
  for (std::uint32_t t = 0; t < k; ++t) {
    CoefficientTerm term;
    const auto sign = io::get<std::uint8_t>(is, what);
    if (sign != 0x01 && sign != 0x02) throw Error(what + ": bad sign byte");
    term.sign = static_cast<Sign>(sign);
    const auto kind = io::get<std::uint8_t>(is, what);
    if (kind > 1) throw Error(what + ": bad term byte");
    term.term = kind == 0 ? PdeTerm::TimeDerivative : PdeTerm::Laplacian;
    term.label = kind == 0 ? "-alpha" : "c2";
    const int r = io::checked_dim(io::get<std::uint32_t>(is, what), what);
    term.factors.u.resize(io::checked_dim(m1, what), r);
    term.factors.v.resize(io::checked_dim(m2, what), r);
    for (Matrix* m : {&term.factors.u, &term.factors.v})
      for (Eigen::Index i = 0; i < m->rows(); ++i)
        for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = io::get<double>(is, what);
    c.coeffs.terms.push_back(std::move(term));
  }
  return c;
}

// Path conveniences.

inline void save_wavefield(const std::filesystem::path& p, const WaveField& f) {
  auto os = io::open_out(p);
  write_wavefield(os, f);
}
inline WaveField load_wavefield(const std::filesystem::path& p) {
  auto is = io::open_in(p);
  return read_wavefield(is);
}
inline void save_coefficients(const std::filesystem::path& p, const CoefficientField& c) {
  auto os = io::open_out(p);
  write_coefficients(os, c);
}
inline CoefficientField load_coefficients(const std::filesystem::path& p) {
  auto is = io::open_in(p);
  return read_coefficients(is);
}
inline void save_mask(const std::filesystem::path& p, const Mask& m) {
  auto os = io::open_out(p);
  write_mask(os, m);
}
inline Mask load_mask(const std::filesystem::path& p) {
  auto is = io::open_in(p);
  return read_mask(is);
}
inline void save_checkpoint(const std::filesystem::path& p, const MlpParams& params, const CoefficientSet& coeffs) {
  auto os = io::open_out(p);
  write_checkpoint(os, params, coeffs);
}
inline Checkpoint load_checkpoint(const std::filesystem::path& p) {
  auto is = io::open_in(p);
  return read_checkpoint(is);
}

// ---------------------------------------------------------------------------
// CSV.

namespace csv {

inline std::string num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// Fixed six-decimal form for summary tables.
inline std::string fixed(double v, int digits = 6) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace csv

inline void write_history_csv(std::ostream& os, const std::vector<LossRecord>& history) {
  os << "epoch,loss_u,loss_f,loss_g,loss_si,total\n";
  for (const auto& r : history)
    os << r.epoch << ',' << csv::num(r.parts.u) << ',' << csv::num(r.parts.f) << ',' << csv::num(r.parts.g)
       << ',' << csv::num(r.parts.si) << ',' << csv::num(r.total) << '\n';
}

inline void write_recovery_csv(std::ostream& os, const std::vector<LocationRecovery>& recs) {
  os << "i,j,alpha_hat,c2_hat,flag\n";
  for (const auto& r : recs)
    os << r.row << ',' << r.col << ',' << csv::num(r.alpha) << ',' << csv::num(r.c2) << ',' << to_string(r.flag)
       << '\n';
}

/// One row of the results table. r2 is 0 and rmse_alpha NaN for K = 1 runs.
struct SummaryRow {
  std::string preset;
  double noise_pct = 0.0;
  double meas_frac = 1.0;
  int r1 = 0;
  int r2 = 0;
  int epoch = 0;
  double rmse_alpha = std::numeric_limits<double>::quiet_NaN();
  double rmse_c2 = std::numeric_limits<double>::quiet_NaN();
};

inline const char* summary_header() { return "preset,noise_pct,meas_frac,r1,r2,epoch,rmse_alpha,rmse_c2\n"; }

inline void write_summary_row(std::ostream& os, const SummaryRow& r) {
  os << r.preset << ',' << csv::fixed(r.noise_pct, 1) << ',' << csv::fixed(r.meas_frac, 2) << ',' << r.r1 << ','
     << (r.r2 > 0 ? std::to_string(r.r2) : std::string()) << ',' << r.epoch << ',' << csv::fixed(r.rmse_alpha)
     << ',' << csv::fixed(r.rmse_c2) << '\n';
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << summary_header();
  for (const auto& r : rows) write_summary_row(os, r);
}

/// Appends to an existing summary file, writing the header for a new one.
inline void append_summary(const std::filesystem::path& p, const SummaryRow& row) {
  const bool fresh = !std::filesystem::exists(p) || std::filesystem::file_size(p) == 0;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::app);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  if (fresh) os << summary_header();
  write_summary_row(os, row);
}

/// Plain matrix dump, one row per line.
inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << csv::num(m(i, j));
    os << '\n';
  }
}

template <class Fn>
void write_text(const std::filesystem::path& p, Fn&& fn) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  fn(os);
}

// ---------------------------------------------------------------------------
// Heatmaps.

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ColorScale {
  double lo = 0.0;
  double hi = 1.0;
};

/// Blue (lo) -> white (midpoint) -> red (hi), linear in each half. Values
/// outside the scale are clamped; a degenerate scale maps everything to white.
inline Rgb blue_white_red(double v, const ColorScale& s) {
  double t = s.hi > s.lo ? (v - s.lo) / (s.hi - s.lo) : 0.5;
  t = std::clamp(t, 0.0, 1.0);
  auto ch = [](double x) { return std::uint8_t(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
  if (t <= 0.5) {
    const double w = t / 0.5;
    return {ch(w), ch(w), 255};
  }
  const double w = (1.0 - t) / 0.5;
  return {255, ch(w), ch(w)};
}

/// Smallest and largest finite entry over `region` (all entries when null).
inline ColorScale auto_scale(const Matrix& m, const Mask* region = nullptr) {
  ColorScale s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if ((!region || (*region)(i, j)) && std::isfinite(m(i, j))) {
        s.lo = std::min(s.lo, m(i, j));
        s.hi = std::max(s.hi, m(i, j));
      }
  if (!(s.lo <= s.hi)) s = {0.0, 0.0};
  return s;
}

/// Scale covering every panel.
inline ColorScale shared_scale(const std::vector<const Matrix*>& panels) {
  ColorScale s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Matrix* m : panels) {
    const ColorScale p = auto_scale(*m);
    if (p.lo == 0.0 && p.hi == 0.0 && !m->allFinite()) continue;
    s.lo = std::min(s.lo, p.lo);
    s.hi = std::max(s.hi, p.hi);
  }
  if (!(s.lo <= s.hi)) s = {0.0, 0.0};
  return s;
}

/// Row-major RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  Image() = default;
  Image(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(std::size_t(w) * std::size_t(h), fill) {}
  Rgb& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
  [[nodiscard]] const Rgb& at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
};

/// One pixel per location: row i becomes image row i, column j image column j,
/// so the image is M2 wide and M1 tall. Locations outside `shown` (and
/// non-finite entries) are black.
inline Image heatmap(const Matrix& m, const ColorScale& scale, const Mask* shown = nullptr) {
  Image img(int(m.cols()), int(m.rows()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      const bool visible = (!shown || (*shown)(i, j)) && std::isfinite(m(i, j));
      img.at(j, i) = visible ? blue_white_red(m(i, j), scale) : Rgb{0, 0, 0};
    }
  return img;
}

/// Panels left to right, separated by `gap` grey columns.
inline Image side_by_side(const std::vector<Image>& panels, int gap = 2) {
  int w = 0, h = 0;
  for (const auto& p : panels) {
    w += p.width;
    h = std::max(h, p.height);
  }
  if (!panels.empty()) w += gap * int(panels.size() - 1);
  Image out(w, h, Rgb{128, 128, 128});
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) out.at(x0 + x, y) = p.at(x, y);
    x0 += p.width + gap;
  }
  return out;
}

/// Nearest-neighbour enlargement so small grids stay visible.
inline Image upscale(const Image& img, int factor) {
  if (factor < 1) throw Error("upscale: factor must be >= 1");
  Image out(img.width * factor, img.height * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(x / factor, y / factor);
  return out;
}

/// Binary PPM (P6, maxval 255).
inline void write_ppm(std::ostream& os, const Image& img) {
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (const auto& p : img.pixels) {
    const char rgb[3] = {char(p.r), char(p.g), char(p.b)};
    os.write(rgb, 3);
  }
}

inline Image read_ppm(std::istream& is) {
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw Error("ppm: expected a P6 image with maxval 255");
  is.get();
  Image img(w, h);
  for (auto& p : img.pixels) {
    char rgb[3];
    if (!is.read(rgb, 3)) throw Error("ppm: truncated pixel data");
    p = {std::uint8_t(rgb[0]), std::uint8_t(rgb[1]), std::uint8_t(rgb[2])};
  }
  return img;
}

inline void save_ppm(const std::filesystem::path& p, const Image& img) {
  auto os = io::open_out(p);
  write_ppm(os, img);
}

/// Heatmap of a coefficient matrix or a wave frame written as PPM.
inline void render_heatmap(const std::filesystem::path& p, const Matrix& m,
                           std::optional<ColorScale> scale = std::nullopt, const Mask* shown = nullptr,
                           int pixel_size = 1) {
  const ColorScale s = scale ? *scale : auto_scale(m, shown);
  save_ppm(p, upscale(heatmap(m, s, shown), pixel_size));
}

/// Frame n of a wave field on a scale symmetric about zero (zero is white).
inline Matrix frame_for_display(const WaveField& f, int n, ColorScale* scale) {
  if (n < 0 || n >= f.grid().t) throw Error("render: frame " + std::to_string(n) + " is out of range");
  Matrix m = f.frame(n);
  const double a = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  if (scale) *scale = {-a, a};
  return m;
}

}  // namespace sdpinn
