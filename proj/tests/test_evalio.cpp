#include "sdpinn/presets.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace sdpinn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdpinn_evalio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream s;
  s << is.rdbuf();
  return s.str();
}

std::string bytes(const std::string& s, std::size_t pos, std::size_t n) { return s.substr(pos, n); }

std::uint32_t u32_at(const std::string& s, std::size_t pos) {
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | std::uint8_t(s[pos + std::size_t(k)]);
  return v;
}

GridSpec tiny_grid() {
  GridSpec g;
  g.m1 = 4;
  g.m2 = 3;
  g.t = 5;
  return g;
}

// A small K = 1 run that trains in well under a second.
ExperimentPreset quick_preset() {
  ExperimentPreset p = find_preset("desk_table1_clean_full_r3");
  p.name = "quick";
  p.grid.m1 = p.grid.m2 = 8;
  p.grid.t = 24;
  p.pulses.min_width = 0.2;
  p.pulses.max_width = 0.3;
  p.train.mlp = MlpConfig::toy();
  p.train.epochs = 20;
  p.train.history_every = 5;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// rmse

TEST(Rmse, ZeroForIdenticalFields) {
  const Matrix a = Matrix::Random(5, 4);
  EXPECT_EQ(rmse(a, a, Mask::full(5, 4)), 0.0);
}

TEST(Rmse, SmallExample) {
  Matrix est(2, 2), truth(2, 2);
  est << 2, 2, 2, 2;
  truth << 1, 2, 3, 2;
  EXPECT_NEAR(rmse(est, truth, Mask::full(2, 2)), std::sqrt(0.5), 1e-15);
}

TEST(Rmse, OnlyRegionCounts) {
  Matrix est = Matrix::Zero(3, 3), truth = Matrix::Zero(3, 3);
  est(0, 0) = 100.0;
  est(2, 2) = std::numeric_limits<double>::quiet_NaN();
  est(1, 1) = 3.0;
  Mask region(3, 3);
  region.set(1, 1);
  region.set(0, 1);
  EXPECT_NEAR(rmse(est, truth, region), std::sqrt(9.0 / 2.0), 1e-15);
}

TEST(Rmse, PermutationInvariant) {
  const Matrix est = Matrix::Random(6, 6), truth = Matrix::Random(6, 6);
  Mask region(6, 6);
  for (int k = 0; k < 6; ++k) region.set(k, (k * 5) % 6);
  // permute rows and columns of everything consistently
  const int perm[6] = {3, 0, 5, 1, 4, 2};
  Matrix pe(6, 6), pt(6, 6);
  Mask pr(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      pe(perm[i], perm[j]) = est(i, j);
      pt(perm[i], perm[j]) = truth(i, j);
      if (region(i, j)) pr.set(perm[i], perm[j]);
    }
  EXPECT_NEAR(rmse(est, truth, region), rmse(pe, pt, pr), 1e-15);
}

TEST(Rmse, RejectsBadInputs) {
  const Matrix a = Matrix::Zero(3, 3);
  EXPECT_THROW(rmse(a, a, Mask(3, 3)), Error);
  EXPECT_THROW(rmse(a, Matrix::Zero(3, 2), Mask::full(3, 3)), Error);
  Matrix b = a;
  b(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(rmse(b, a, Mask::full(3, 3)), Error);
}

// ---------------------------------------------------------------------------
// binary formats

TEST(Formats, WavefieldRoundTripAndLayout) {
  const GridSpec g = tiny_grid();
  WaveField f(g);
  for (std::size_t k = 0; k < f.data().size(); ++k) f.data()[k] = std::sin(double(k)) * 1e-3 + double(k);
  std::ostringstream os;
  write_wavefield(os, f);
  const std::string s = os.str();
  EXPECT_EQ(s.size(), 4u + 4 * 4 + 3 * 8 + 8 * g.samples());
  EXPECT_EQ(bytes(s, 0, 4), "SDPW");
  EXPECT_EQ(u32_at(s, 4), 1u);
  EXPECT_EQ(u32_at(s, 8), 4u);
  EXPECT_EQ(u32_at(s, 12), 3u);
  EXPECT_EQ(u32_at(s, 16), 5u);
  // data order is (row, col, time): the second stored sample is (0, 0, 1)
  double second = 0.0;
  std::memcpy(&second, s.data() + 44 + 8, 8);
  EXPECT_EQ(second, f(0, 0, 1));

  std::istringstream is(s);
  const WaveField back = read_wavefield(is);
  EXPECT_EQ(back.grid(), g);
  EXPECT_EQ(back.data(), f.data());
}

TEST(Formats, CoefficientsRoundTripAndLayout) {
  CoefficientField c{Matrix::Random(3, 5), Sign::NonPositive, CoefficientUnits::Attenuation};
  std::ostringstream os;
  write_coefficients(os, c);
  const std::string s = os.str();
  EXPECT_EQ(bytes(s, 0, 4), "SDPC");
  EXPECT_EQ(u32_at(s, 4), 3u);
  EXPECT_EQ(u32_at(s, 8), 5u);
  EXPECT_EQ(std::uint8_t(s[12]), 0x02);
  EXPECT_EQ(s.size(), 13u + 8 * 15);
  double first_row_second = 0.0;
  std::memcpy(&first_row_second, s.data() + 13 + 8, 8);
  EXPECT_EQ(first_row_second, c.values(0, 1));

  std::istringstream is(s);
  const CoefficientField back = read_coefficients(is);
  EXPECT_EQ(back.sign, Sign::NonPositive);
  EXPECT_EQ(back.values, c.values);
}

TEST(Formats, MaskRoundTripAndLayout) {
  Mask m(2, 3);
  m.set(0, 2);
  m.set(1, 0);
  std::ostringstream os;
  write_mask(os, m);
  const std::string s = os.str();
  EXPECT_EQ(bytes(s, 0, 4), "SDPM");
  EXPECT_EQ(u32_at(s, 4), 2u);
  EXPECT_EQ(u32_at(s, 8), 3u);
  EXPECT_EQ(bytes(s, 12, 6), std::string("\0\0\1\1\0\0", 6));
  std::istringstream is(s);
  EXPECT_EQ(read_mask(is), m);
}

TEST(Formats, CheckpointRoundTrip) {
  const GridSpec g = tiny_grid();
  TrainConfig cfg;
  cfg.mlp = {3, 7};
  const TrainState s = initial_state(g, wave_terms(true, 2, 3), cfg);
  std::ostringstream os;
  write_checkpoint(os, s.params, s.coeffs);
  const std::string bin = os.str();
  EXPECT_EQ(bytes(bin, 0, 4), "SDPT");
  EXPECT_EQ(u32_at(bin, 4), 1u);
  EXPECT_EQ(u32_at(bin, 8), 3u);
  EXPECT_EQ(u32_at(bin, 12), 7u);
  EXPECT_EQ(u32_at(bin, 16), 3u);
  EXPECT_EQ(u32_at(bin, 20), 1u);
  const std::size_t np = s.params.size();
  const std::size_t factors = (4 + 3) * 2 + (4 + 3) * 3;
  EXPECT_EQ(bin.size(), 24 + 8 * np + 12 + 2 * (2 + 4) + 8 * factors);

  std::istringstream is(bin);
  const Checkpoint c = read_checkpoint(is);
  EXPECT_EQ(flatten(c.params), flatten(s.params));
  ASSERT_EQ(c.coeffs.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(c.coeffs[k].sign, s.coeffs[k].sign);
    EXPECT_EQ(c.coeffs[k].term, s.coeffs[k].term);
    EXPECT_EQ(c.coeffs[k].factors.u, s.coeffs[k].factors.u);
    EXPECT_EQ(c.coeffs[k].factors.v, s.coeffs[k].factors.v);
  }
}

TEST(Formats, BadMagicAndTruncationAreErrors) {
  CoefficientField c{Matrix::Ones(2, 2), Sign::NonNegative, CoefficientUnits::Unitless};
  std::ostringstream os;
  write_coefficients(os, c);
  std::string s = os.str();

  std::istringstream trunc(s.substr(0, s.size() - 3));
  EXPECT_THROW(read_coefficients(trunc), Error);

  std::string wrong = s;
  wrong[3] = 'X';
  std::istringstream bad(wrong);
  EXPECT_THROW(read_coefficients(bad), Error);

  std::istringstream other(s);
  EXPECT_THROW(read_mask(other), Error);

  std::string sign = s;
  sign[12] = 0x03;
  std::istringstream bad_sign(sign);
  EXPECT_THROW(read_coefficients(bad_sign), Error);
}

TEST(Formats, MissingFileIsAnError) {
  EXPECT_THROW(load_wavefield("/nonexistent/dir/field.sdpw"), Error);
}

// ---------------------------------------------------------------------------
// CSV

TEST(Csv, HistoryHeaderAndRows) {
  LossRecord r;
  r.epoch = 7;
  r.parts = {0.5, 0.25, 0.125, 0.0};
  r.total = 0.875;
  std::ostringstream os;
  write_history_csv(os, {r});
  EXPECT_EQ(os.str(), "epoch,loss_u,loss_f,loss_g,loss_si,total\n7,0.5,0.25,0.125,0,0.875\n");
}

TEST(Csv, RecoveryHeaderAndRows) {
  std::ostringstream os;
  write_recovery_csv(os, {{1, 2, 0.5, 2.25, RecoveryFlag::Ok},
                          {0, 0, std::numeric_limits<double>::quiet_NaN(),
                           std::numeric_limits<double>::quiet_NaN(), RecoveryFlag::Boundary}});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "i,j,alpha_hat,c2_hat,flag");
  std::getline(is, line);
  EXPECT_EQ(line, "1,2,0.5,2.25," + std::string(to_string(RecoveryFlag::Ok)));
  std::getline(is, line);
  EXPECT_EQ(line, "0,0,,," + std::string(to_string(RecoveryFlag::Boundary)));
}

TEST(Csv, SummaryMatchesGoldenFile) {
  std::vector<SummaryRow> rows;
  for (const char* name : {"table1_clean_full_r5", "table3_m50_clean_r55", "table3_full_noise20_r55",
                           "table4_baseline1"}) {
    const ExperimentPreset p = find_preset(name);
    RunReport rep;
    rep.preset = p.name;
    rep.noise_pct = p.noise_pct;
    rep.meas_frac = p.meas_frac;
    rep.r1 = p.r1;
    rep.r2 = p.attenuating ? p.r2 : 0;
    rep.epoch = p.train.epochs;
    rep.rmse_alpha = p.reference_rmse_alpha;
    rep.rmse_c2 = p.reference_rmse_c2;
    rows.push_back(rep.summary());
  }
  std::ostringstream os;
  write_summary_csv(os, rows);
  EXPECT_EQ(os.str(), slurp(fs::path(SDPINN_GOLDEN_DIR) / "summary.csv"));
}

TEST(Csv, AppendSummaryWritesHeaderOnce) {
  const fs::path dir = scratch("append");
  const fs::path p = dir / "summary.csv";
  SummaryRow r;
  r.preset = "x";
  r.r1 = 3;
  r.rmse_c2 = 0.5;
  append_summary(p, r);
  append_summary(p, r);
  EXPECT_EQ(slurp(p), std::string(summary_header()) + "x,0.0,1.00,3,,0,,0.500000\nx,0.0,1.00,3,,0,,0.500000\n");
}

// ---------------------------------------------------------------------------
// heatmaps

TEST(Heatmap, ColourMapEndpoints) {
  const ColorScale s{-1.0, 1.0};
  EXPECT_EQ(blue_white_red(-1.0, s), (Rgb{0, 0, 255}));
  EXPECT_EQ(blue_white_red(0.0, s), (Rgb{255, 255, 255}));
  EXPECT_EQ(blue_white_red(1.0, s), (Rgb{255, 0, 0}));
  EXPECT_EQ(blue_white_red(-0.5, s), (Rgb{128, 128, 255}));
  EXPECT_EQ(blue_white_red(7.0, s), (Rgb{255, 0, 0}));
}

TEST(Heatmap, ConstantFieldIsUniformAndSizedM2ByM1) {
  const Matrix m = Matrix::Constant(3, 5, 2.0);
  const fs::path p = scratch("ppm") / "c.ppm";
  render_heatmap(p, m);
  std::ifstream is(p, std::ios::binary);
  const Image img = read_ppm(is);
  EXPECT_EQ(img.width, 5);
  EXPECT_EQ(img.height, 3);
  for (const Rgb& px : img.pixels) EXPECT_EQ(px, img.pixels.front());
  EXPECT_EQ(slurp(p).substr(0, 11), "P6\n5 3\n255\n");
}

TEST(Heatmap, OneMaskedEntryGivesOneBlackPixel) {
  Matrix m(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = i + 0.5 * j;
  Mask shown = Mask::full(4, 4);
  Mask hidden(4, 4);
  hidden.set(2, 1);
  shown = shown.minus(hidden);
  const Image img = heatmap(m, auto_scale(m), &shown);
  int black = 0;
  for (const Rgb& px : img.pixels) black += px == Rgb{0, 0, 0};
  EXPECT_EQ(black, 1);
  EXPECT_EQ(img.at(1, 2), (Rgb{0, 0, 0}));
}

TEST(Heatmap, SideBySidePanelsShareOneScale) {
  const Matrix a = Matrix::Constant(2, 2, 0.0), b = Matrix::Constant(2, 2, 10.0);
  const ColorScale s = shared_scale({&a, &b});
  EXPECT_EQ(s.lo, 0.0);
  EXPECT_EQ(s.hi, 10.0);
  const Image img = side_by_side({heatmap(a, s), heatmap(b, s)}, 1);
  EXPECT_EQ(img.width, 5);
  EXPECT_EQ(img.at(0, 0), (Rgb{0, 0, 255}));
  EXPECT_EQ(img.at(2, 0), (Rgb{128, 128, 128}));
  EXPECT_EQ(img.at(4, 1), (Rgb{255, 0, 0}));
  EXPECT_EQ(upscale(img, 3).width, 15);
}

// ---------------------------------------------------------------------------
// presets

TEST(Presets, RegistryCoversEveryTableRowOnce) {
  std::set<std::string> names;
  int table[5] = {};
  for (const auto& p : all_presets()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    EXPECT_NO_THROW(p.validate()) << p.name;
    if (p.name.rfind("desk_", 0) == 0) continue;
    table[p.name[5] - '0']++;
    EXPECT_TRUE(std::isfinite(p.reference_rmse_c2)) << p.name;
    EXPECT_EQ(p.attenuating, std::isfinite(p.reference_rmse_alpha)) << p.name;
  }
  EXPECT_EQ(table[1], 12);
  EXPECT_EQ(table[2], 3);
  EXPECT_EQ(table[3], 10);
  EXPECT_EQ(table[4], 3);
  EXPECT_EQ(all_presets().size(), 2u * 28u);
  for (const auto& p : all_presets())
    if (p.name.rfind("desk_", 0) != 0) EXPECT_TRUE(names.count("desk_" + p.name)) << p.name;
}

TEST(Presets, DistinctSettingsPerTable) {
  std::set<std::tuple<double, double, int>> t1;
  std::set<std::tuple<double, double, int, int>> t3;
  for (const auto& p : all_presets()) {
    if (p.name.rfind("table1_", 0) == 0) t1.insert({p.noise_pct, p.meas_frac, p.r1});
    if (p.name.rfind("table3_", 0) == 0) t3.insert({p.noise_pct, p.meas_frac, p.r1, p.r2});
  }
  EXPECT_EQ(t1.size(), 12u);
  EXPECT_EQ(t3.size(), 10u);
}

TEST(Presets, SpotChecks) {
  const auto t1 = find_preset("table1_clean_full_r5");
  EXPECT_EQ(t1.reference_rmse_c2, 0.128);
  EXPECT_FALSE(t1.attenuating);
  EXPECT_EQ(t1.omega, MaskKind::Boundary);
  EXPECT_EQ(t1.grid, GridSpec{});
  const auto t2 = find_preset("table2_grid");
  EXPECT_EQ(t2.reference_rmse_alpha, 4.228);
  EXPECT_EQ(sample_mask(t2.grid, t2.omega, t2.omega_amount, t2.omega_seed).count(), 30u);
  const auto t2r = find_preset("table2_random");
  EXPECT_EQ(sample_mask(t2r.grid, t2r.omega, t2r.omega_amount, t2r.omega_seed).count(), 30u);
  const auto t4 = find_preset("table4_baseline2");
  EXPECT_EQ(t4.method, Method::Baseline2);
  EXPECT_EQ(t4.reference_rmse_c2, 0.810);
  EXPECT_EQ(sample_mask(t4.grid, t4.omega, 0, 0).count(), 88u);
  const auto desk = find_preset("desk_table2_grid");
  EXPECT_EQ(desk.grid.m1, 20);
  EXPECT_EQ(desk.train.mlp.hidden_width, 64);
  EXPECT_EQ(desk.train.epochs, 1500);
  EXPECT_EQ(desk.train.learning_rate, 3e-3);
  EXPECT_EQ(find_preset("desk_table1_clean_full_r5").train.learning_rate, 1e-2);
  EXPECT_THROW(find_preset("table9_nothing"), Error);
}

TEST(Presets, DatasetRespectsMeasurementFraction) {
  ExperimentPreset p = find_preset("desk_table3_m50_clean_r55");
  const Dataset d = make_dataset(p);
  EXPECT_TRUE(d.omega.minus(d.available).empty());
  const std::size_t outside = d.omega.complement().count();
  EXPECT_EQ(d.available.count() - d.omega.count(), std::size_t(std::lround(0.5 * double(outside))));
  EXPECT_EQ(d.c2.values.minCoeff() >= 1.0 - 1e-12, true);
  EXPECT_LE(d.alpha.values.maxCoeff(), 5.0 + 1e-12);
  const auto given = given_entries(p, d);
  ASSERT_EQ(given.size(), 2u);
  EXPECT_LE(given[0].front().value, 0.0);
  EXPECT_EQ(given[1].size(), d.omega.count());
}

TEST(Presets, JsonRoundTrip) {
  for (const auto& p : all_presets()) {
    const Json j = to_json(p);
    const ExperimentPreset q = preset_from_json(Json::parse(j.dump()));
    EXPECT_EQ(to_json(q), j) << p.name;
  }
}

TEST(Presets, JsonOverridesABase) {
  const Json j = Json::parse(R"({"base": "table3_m50_clean_r55", "name": "custom", "rank": [3, 4],
                                 "train": {"epochs": 10}, "omega": {"kind": "diagonal"}})");
  const ExperimentPreset p = preset_from_json(j);
  EXPECT_EQ(p.name, "custom");
  EXPECT_EQ(p.r1, 3);
  EXPECT_EQ(p.r2, 4);
  EXPECT_EQ(p.train.epochs, 10);
  EXPECT_EQ(p.train.mlp.hidden_width, 200);
  EXPECT_EQ(p.omega, MaskKind::Diagonal);
  EXPECT_EQ(p.meas_frac, 0.5);
}

TEST(Presets, JsonRejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(preset_from_json(Json::parse(R"({"name": "x", "epochs": 3})")), Error);
  EXPECT_THROW(preset_from_json(Json::parse(R"({"name": "x", "train": {"epoch": 3}})")), Error);
  EXPECT_THROW(preset_from_json(Json::parse(R"({"name": "x", "meas_frac": 0})")), Error);
  EXPECT_THROW(preset_from_json(Json::parse(R"({"name": "x", "rank": "five"})")), Error);
  EXPECT_THROW(preset_from_json(Json::parse(R"({"base": "nope"})")), Error);
}

// ---------------------------------------------------------------------------
// runs

TEST(RunPreset, ZeroEpochsReportsTheInitialisation) {
  ExperimentPreset p = quick_preset();
  p.train.epochs = 0;
  const RunReport rep = run_preset(p);
  const Dataset d = make_dataset(p);
  const TrainState init = initial_state(p.grid, p.terms(), p.train);
  const Mask oc = d.omega.complement();
  EXPECT_EQ(rep.epoch, 0);
  EXPECT_EQ(rep.region_size, oc.count());
  EXPECT_DOUBLE_EQ(rep.rmse_c2, rmse(compose(init.coeffs[0]), d.c2, oc));
  EXPECT_TRUE(std::isnan(rep.rmse_alpha));
}

TEST(RunPreset, WritesArtifacts) {
  const fs::path dir = scratch("run");
  const ExperimentPreset p = quick_preset();
  const RunReport rep = run_preset(p, dir);
  for (const char* f : {"truth_c2.sdpc", "c2_hat.sdpc", "omega.sdpm", "available.sdpm", "field.sdpw",
                        "checkpoint.sdpt", "history.csv", "history_full.csv", "recovery.csv", "c2.ppm",
                        "frame.ppm", "summary.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(load_coefficients(dir / "c2_hat.sdpc").values, rep.c2_hat.values);
  const Checkpoint c = load_checkpoint(dir / "checkpoint.sdpt");
  EXPECT_EQ(c.coeffs.size(), 1u);
  EXPECT_NEAR((compose(c.coeffs[0]).values - rep.c2_hat.values).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_EQ(rep.history.size(), 20u);
  const std::string summary = slurp(dir / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n') + 1), summary_header());
  EXPECT_NE(summary.find("\nquick,0.0,1.00,3,,20,,"), std::string::npos);
}

TEST(RunPreset, ReproducibleSingleThreaded) {
  sdpinn::testing::ThreadGuard one("1");
  const ExperimentPreset p = quick_preset();
  const RunReport a = run_preset(p), b = run_preset(p);
  EXPECT_EQ(a.rmse_c2, b.rmse_c2);
  EXPECT_EQ(a.c2_hat.values, b.c2_hat.values);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].total, b.history[k].total);
}

TEST(RunPreset, BaselinesReportOverEstimatedEntries) {
  ExperimentPreset p = find_preset("desk_table4_baseline1");
  const RunReport b1 = run_preset(p);
  EXPECT_GT(b1.region_size, 0u);
  EXPECT_LT(b1.region_size, make_dataset(p).omega.complement().count());
  EXPECT_GT(b1.rmse_c2, 0.0);
  p.method = Method::Baseline2;
  const RunReport b2 = run_preset(p);
  EXPECT_EQ(b2.region_size, make_dataset(p).omega.complement().count());
  EXPECT_GT(b2.tau, 0.0);
}

TEST(RunPreset, ErrorsCarryThePresetName) {
  ExperimentPreset p = quick_preset();
  p.name = "broken";
  p.omega = MaskKind::EvenGrid;
  p.omega_amount = 0;
  try {
    run_preset(p);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("preset 'broken'"), std::string::npos);
  }
}

TEST(Smoothing, EmaOfAConstantIsConstant) {
  std::vector<LossRecord> h(50);
  for (auto& r : h) r.total = 3.0;
  for (double v : smoothed_totals(h, 10)) EXPECT_DOUBLE_EQ(v, 3.0);
  h[10].total = 14.0;
  const auto s = smoothed_totals(h, 10);
  EXPECT_NEAR(s[10], 3.0 + 11.0 * 2.0 / 11.0, 1e-12);
}
