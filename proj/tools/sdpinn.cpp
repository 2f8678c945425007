// Command-line front end: data generation, training, baselines, evaluation
// and rendering.

#include "sdpinn/presets.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

using namespace sdpinn;
namespace fs = std::filesystem;

namespace {

GridSpec parse_grid(const std::string& s, GridSpec g) {
  static const std::regex re(R"((\d+)x(\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw Error("--grid expects M1xM2xT, e.g. 30x30x198");
  g.m1 = std::stoi(m[1]);
  g.m2 = std::stoi(m[2]);
  g.t = std::stoi(m[3]);
  return g;
}

std::vector<int> parse_ranks(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty()) throw Error("--rank expects one or two integers, e.g. 5,5");
    out.push_back(v);
  }
  if (out.empty() || out.size() > 2) throw Error("--rank expects one or two integers, e.g. 5,5");
  return out;
}

// Options shared by every subcommand that builds an experiment.
struct ExperimentOptions {
  std::string preset;
  std::string config;
  std::string grid;
  std::optional<double> noise_pct;
  std::optional<double> meas_frac;
  std::string omega;
  std::optional<double> omega_amount;
  std::string rank;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<int> width;
  std::optional<int> layers;
  bool attenuating = false;
  bool non_attenuating = false;
  std::string out;
  bool quiet = false;

  void attach(CLI::App* app, bool with_training) {
    app->add_option("--preset", preset, "Start from a named preset (see 'preset list')");
    app->add_option("--config", config, "JSON experiment description")->check(CLI::ExistingFile);
    app->add_option("--grid", grid, "Grid size M1xM2xT");
    app->add_option("--noise-pct", noise_pct, "Gaussian noise, percent of the field's standard deviation");
    app->add_option("--meas-frac", meas_frac, "Fraction of locations outside Omega that are measured");
    app->add_option("--omega", omega, "Given-coefficient layout: boundary, rbd, diagonal, grid, random, full");
    app->add_option("--omega-amount", omega_amount, "Entry count (grid) or fraction (random) for --omega");
    app->add_flag("--attenuating", attenuating, "Recover alpha and c^2");
    app->add_flag("--non-attenuating", non_attenuating, "Recover c^2 only");
    app->add_option("--seed", seed, with_training ? "Training seed" : "Simulation seed");
    app->add_option("--out", out, "Output directory");
    if (!with_training) return;
    app->add_option("--rank", rank, "Rank budgets r1[,r2]");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Adam step size");
    app->add_option("--width", width, "Hidden layer width");
    app->add_option("--layers", layers, "Layer count");
    app->add_flag("--quiet", quiet, "No progress output");
  }

  ExperimentPreset build(bool with_training) const {
    ExperimentPreset p;
    p.name = "custom";
    if (!preset.empty()) p = find_preset(preset);
    if (!config.empty()) {
      std::ifstream is(config);
      Json j;
      try {
        is >> j;
      } catch (const Json::exception& e) {
        throw Error("config '" + config + "': " + e.what());
      }
      p = preset_from_json(j, p);
    }
    if (!grid.empty()) p.grid = parse_grid(grid, p.grid);
    if (noise_pct) p.noise_pct = *noise_pct;
    if (meas_frac) p.meas_frac = *meas_frac;
    if (!omega.empty()) p.omega = parse_mask_kind(omega);
    if (omega_amount) p.omega_amount = *omega_amount;
    if (attenuating && non_attenuating) throw Error("--attenuating and --non-attenuating are exclusive");
    if (attenuating) p.attenuating = true;
    if (non_attenuating) p.attenuating = false;
    if (p.attenuating && p.r2 < 1) p.r2 = p.r1;
    if (!rank.empty()) {
      const auto r = parse_ranks(rank);
      p.r1 = r[0];
      if (r.size() > 1) p.r2 = r[1];
      else if (p.attenuating) throw Error("--rank needs two budgets (alpha,c2) for attenuating waves");
    }
    if (epochs) p.train.epochs = *epochs;
    if (seed) (with_training ? p.train.seed : p.sim_seed) = *seed;
    if (lr) p.train.learning_rate = *lr;
    if (width) p.train.mlp.hidden_width = *width;
    if (layers) p.train.mlp.layer_count = *layers;
    p.validate();
    return p;
  }
};

void print_report(const RunReport& r) {
  std::printf("preset      %s (%s)\n", r.preset.c_str(), to_string(r.method));
  if (r.attenuating) {
    std::printf("rmse_alpha  %.6f", r.rmse_alpha);
    if (std::isfinite(r.reference_rmse_alpha)) std::printf("   (reference %.3f)", r.reference_rmse_alpha);
    std::printf("\n");
  }
  std::printf("rmse_c2     %.6f", r.rmse_c2);
  if (std::isfinite(r.reference_rmse_c2)) std::printf("   (reference %.3f)", r.reference_rmse_c2);
  std::printf("\n");
  std::printf("region      %zu locations\n", r.region_size);
  if (r.method == Method::SdPinn) std::printf("epochs      %d\n", r.epoch);
  if (r.method == Method::Baseline2) std::printf("tau         %.6g\n", r.tau);
  std::printf("seconds     %.1f\n", r.seconds);
}

RunReport run(const ExperimentPreset& p, const std::string& out, bool quiet) {
  RunProgress progress;
  if (!quiet) {
    const int every = std::max(1, p.train.history_every > 0 ? p.train.history_every : 100);
    progress = [every](const ExperimentPreset&, const TrainState&, const LossRecord& r) {
      if (r.epoch % every == 0)
        std::fprintf(stderr, "epoch %6d  u %.4e  f %.4e  g %.4e  si %.4e  total %.4e\n", r.epoch, r.parts.u,
                     r.parts.f, r.parts.g, r.parts.si, r.total);
    };
  }
  const RunReport rep = run_preset(p, out.empty() ? fs::path{} : fs::path(out), progress);
  print_report(rep);
  if (!out.empty()) std::printf("artifacts   %s\n", out.c_str());
  return rep;
}

std::optional<ColorScale> parse_scale(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw Error("--scale expects lo,hi");
  return ColorScale{std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
}

bool has_magic(const fs::path& p, const char* magic) {
  std::ifstream is(p, std::ios::binary);
  char buf[4] = {};
  return is.read(buf, 4) && std::string(buf, 4) == magic;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse low-rank coefficient recovery for 2-D wave equations"};
  app.require_subcommand(1);

  // simulate
  ExperimentOptions sim_opt;
  auto* sim = app.add_subcommand("simulate", "Draw coefficient fields and simulate the wave field");
  sim_opt.attach(sim, false);
  sim->callback([&] {
    const ExperimentPreset p = sim_opt.build(false);
    const fs::path out = sim_opt.out.empty() ? fs::path("sim") : fs::path(sim_opt.out);
    const Dataset d = make_dataset(p);
    save_wavefield(out / "field_clean.sdpw", d.clean);
    save_wavefield(out / "field.sdpw", d.measured);
    save_coefficients(out / "truth_c2.sdpc", d.c2);
    if (p.attenuating) save_coefficients(out / "truth_alpha.sdpc", d.alpha);
    save_mask(out / "omega.sdpm", d.omega);
    save_mask(out / "available.sdpm", d.available);
    std::printf("wrote %dx%dx%d field, c^2 in [%.3f, %.3f] to %s\n", p.grid.m1, p.grid.m2, p.grid.t,
                d.c2.values.minCoeff(), d.c2.values.maxCoeff(), out.c_str());
  });

  // mask
  std::string mask_grid = "30x30x198", mask_kind = "rbd", mask_out = "omega.sdpm", mask_within;
  double mask_amount = 0.0;
  std::uint64_t mask_seed = 23;
  auto* mask = app.add_subcommand("mask", "Write a location mask");
  mask->add_option("--grid", mask_grid, "Grid size M1xM2xT")->capture_default_str();
  mask->add_option("--omega,--kind", mask_kind, "full, random, diagonal, grid, rbd or boundary")->capture_default_str();
  mask->add_option("--amount,--meas-frac", mask_amount, "Fraction (random) or count (grid)");
  mask->add_option("--within", mask_within, "Draw random locations only inside this mask")->check(CLI::ExistingFile);
  mask->add_option("--seed", mask_seed)->capture_default_str();
  mask->add_option("--out", mask_out)->capture_default_str();
  mask->callback([&] {
    const GridSpec g = parse_grid(mask_grid, {});
    std::optional<Mask> within;
    if (!mask_within.empty()) within = load_mask(mask_within);
    const Mask m = sample_mask(g, parse_mask_kind(mask_kind), mask_amount, mask_seed, within ? &*within : nullptr);
    save_mask(mask_out, m);
    const Coverage c = coverage_stats(m);
    std::printf("%zu locations, %d rows and %d columns covered -> %s\n", m.count(), c.distinct_rows,
                c.distinct_cols, mask_out.c_str());
  });

  // noise
  std::string noise_in, noise_out = "field_noisy.sdpw";
  double noise_pct = 10.0;
  std::uint64_t noise_seed = 21;
  auto* noise = app.add_subcommand("noise", "Add Gaussian noise to a wave field");
  noise->add_option("--in", noise_in)->required()->check(CLI::ExistingFile);
  noise->add_option("--noise-pct", noise_pct)->capture_default_str();
  noise->add_option("--seed", noise_seed)->capture_default_str();
  noise->add_option("--out", noise_out)->capture_default_str();
  noise->callback([&] {
    save_wavefield(noise_out, add_noise(load_wavefield(noise_in), noise_pct, noise_seed));
    std::printf("wrote %s\n", noise_out.c_str());
  });

  // train / baselines
  ExperimentOptions train_opt, b1_opt, b2_opt;
  auto* tr = app.add_subcommand("train", "Simulate, then recover the coefficients with the network");
  train_opt.attach(tr, true);
  tr->callback([&] {
    ExperimentPreset p = train_opt.build(true);
    p.method = Method::SdPinn;
    run(p, train_opt.out, train_opt.quiet);
  });
  std::string b2_taus;
  auto* b1 = app.add_subcommand("baseline1", "Interpolation + finite differences + least squares");
  b1_opt.attach(b1, false);
  b1->callback([&] {
    ExperimentPreset p = b1_opt.build(false);
    p.method = Method::Baseline1;
    run(p, b1_opt.out, true);
  });
  auto* b2 = app.add_subcommand("baseline2", "Finite differences at measured spots + SVT completion");
  b2_opt.attach(b2, false);
  b2->add_option("--taus", b2_taus, "Comma-separated SVT thresholds to sweep (default: scaled grid)");
  b2->callback([&] {
    ExperimentPreset p = b2_opt.build(false);
    p.method = Method::Baseline2;
    if (!b2_taus.empty()) {
      p.baseline2.taus.clear();
      std::stringstream ss(b2_taus);
      std::string item;
      while (std::getline(ss, item, ',')) p.baseline2.taus.push_back(std::stod(item));
    }
    run(p, b2_opt.out, true);
  });

  // eval
  std::string ev_est, ev_truth, ev_omega;
  auto* ev = app.add_subcommand("eval", "RMSE of an estimate over the locations outside Omega");
  ev->add_option("--estimate", ev_est)->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", ev_truth)->required()->check(CLI::ExistingFile);
  ev->add_option("--omega", ev_omega, "Mask of given locations (default: none)")->check(CLI::ExistingFile);
  ev->callback([&] {
    const CoefficientField est = load_coefficients(ev_est), truth = load_coefficients(ev_truth);
    Mask region = Mask::full(truth.rows(), truth.cols());
    if (!ev_omega.empty()) region = load_mask(ev_omega).complement();
    region = region.intersected(finite_entries(est.values));
    std::printf("rmse %.6f over %zu locations\n", rmse(est, truth, region), region.count());
  });

  // render
  std::string rd_in, rd_out = "heatmap.ppm", rd_mask, rd_scale, rd_side;
  int rd_frame = 0, rd_pixel = 8;
  auto* rd = app.add_subcommand("render", "Heatmap (PPM) of a coefficient field or one wave frame");
  rd->add_option("--in", rd_in, ".sdpc or .sdpw file")->required()->check(CLI::ExistingFile);
  rd->add_option("--beside", rd_side, "Second .sdpc drawn to the right on the same scale")->check(CLI::ExistingFile);
  rd->add_option("--frame", rd_frame, "Time step for wave fields")->capture_default_str();
  rd->add_option("--mask", rd_mask, "Locations outside this mask are drawn black")->check(CLI::ExistingFile);
  rd->add_option("--scale", rd_scale, "Colour range lo,hi");
  rd->add_option("--pixel", rd_pixel, "Pixels per location")->capture_default_str();
  rd->add_option("--out", rd_out)->capture_default_str();
  rd->callback([&] {
    std::optional<Mask> shown;
    if (!rd_mask.empty()) shown = load_mask(rd_mask);
    const Mask* sp = shown ? &*shown : nullptr;
    std::optional<ColorScale> scale = parse_scale(rd_scale);
    if (has_magic(rd_in, "SDPW")) {
      ColorScale s;
      const Matrix m = frame_for_display(load_wavefield(rd_in), rd_frame, &s);
      render_heatmap(rd_out, m, scale ? scale : s, sp, rd_pixel);
    } else {
      const Matrix a = load_coefficients(rd_in).values;
      if (rd_side.empty()) {
        render_heatmap(rd_out, a, scale, sp, rd_pixel);
      } else {
        const Matrix b = load_coefficients(rd_side).values;
        const ColorScale s = scale ? *scale : shared_scale({&a, &b});
        save_ppm(rd_out, upscale(side_by_side({heatmap(a, s, sp), heatmap(b, s, sp)}), rd_pixel));
      }
    }
    std::printf("wrote %s\n", rd_out.c_str());
  });

  // preset
  auto* pre = app.add_subcommand("preset", "Named experiments");
  pre->require_subcommand(1);
  auto* list = pre->add_subcommand("list", "List the named presets");
  bool list_json = false;
  list->add_flag("--json", list_json, "Print every preset as JSON");
  list->callback([&] {
    if (list_json) {
      Json all = Json::array();
      for (const auto& p : all_presets()) all.push_back(to_json(p));
      std::cout << all.dump(2) << '\n';
      return;
    }
    for (const auto& p : all_presets()) {
      std::printf("%-34s %-9s ref c2 %-6s  %s\n", p.name.c_str(), to_string(p.method),
                  csv::fixed(p.reference_rmse_c2, 3).c_str(), p.description.c_str());
    }
  });
  std::string run_name, run_out, run_summary;
  std::optional<int> run_epochs;
  std::optional<std::uint64_t> run_seed;
  bool run_quiet = false;
  auto* prun = pre->add_subcommand("run", "Run a named preset");
  prun->add_option("name", run_name)->required();
  prun->add_option("--epochs", run_epochs);
  prun->add_option("--seed", run_seed, "Training seed");
  prun->add_option("--out", run_out, "Artifact directory");
  prun->add_option("--summary", run_summary, "Append the result row to this CSV");
  prun->add_flag("--quiet", run_quiet);
  prun->callback([&] {
    ExperimentPreset p = find_preset(run_name);
    if (run_epochs) p.train.epochs = *run_epochs;
    if (run_seed) p.train.seed = *run_seed;
    const RunReport rep = run(p, run_out, run_quiet);
    if (!run_summary.empty()) append_summary(run_summary, rep.summary());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
