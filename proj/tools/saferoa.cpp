#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "saferoa/pipeline.hpp"

namespace {

using saferoa::Json;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  bool verbose = false;
};

Json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw saferoa::ConfigError("", fmt::format("cannot read {}", path));
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw saferoa::ConfigError("", fmt::format("{} is not valid JSON: {}", path, e.what()));
  }
}

saferoa::RunConfig load_config(const Json& j, const CommonOptions& opt) {
  saferoa::RunConfig cfg = saferoa::run_config_from_json(j);
  if (opt.seed) saferoa::apply_seed(cfg, *opt.seed);
  if (!opt.out.empty()) cfg.out = opt.out;
  cfg.synthesis.verbose = opt.verbose;
  return cfg;
}

int dry_run(const saferoa::RunConfig& cfg) {
  fmt::print("config '{}' is valid (n = {}, m = {}, {} unsafe sets, {} learned components)\n", cfg.name, cfg.system.n,
             cfg.system.m, cfg.system.unsafe.size(), cfg.learn.components.size());
  for (const auto& p : saferoa::plan_run(cfg)) {
    std::string blocks;
    for (size_t i = 0; i < p.size.blocks.size(); ++i) blocks += fmt::format("{}{}", i ? "," : "", p.size.blocks[i]);
    fmt::print("{:<9} rows={} free={} nonneg={} psd_blocks={} [{}]\n", p.name, p.size.rows, p.size.free_vars,
               p.size.nonneg_vars, p.size.blocks.size(), blocks);
  }
  return kExitOk;
}

int run(const saferoa::RunConfig& cfg, bool verbose) {
  const saferoa::RunResult r = saferoa::execute_run(cfg);
  saferoa::write_run_outputs(r, cfg.out);
  if (verbose) std::cerr << r.report.dump(2) << "\n";
  if (!r.failed_stage.empty()) {
    std::cerr << fmt::format("stage failed: {}\n", r.failed_stage);
    return kExitFailed;
  }
  fmt::print("certificate verified; fraction_safe = {}; outputs in {}\n", r.fraction_safe, cfg.out);
  return kExitOk;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const saferoa::ConfigError& e) {
    std::cerr << fmt::format("config error at '{}': {}\n", e.path(), e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << fmt::format("error: {}\n", e.what());
    return kExitFailed;
  }
}

saferoa::Box parse_box(const std::vector<double>& v, int n) {
  if (static_cast<int>(v.size()) != 2 * n) {
    throw saferoa::ConfigError("--box", fmt::format("expected {} numbers lo1 hi1 lo2 hi2 ...", 2 * n));
  }
  saferoa::Box b;
  for (int i = 0; i < n; ++i) {
    b.lo.push_back(v[static_cast<size_t>(2 * i)]);
    b.hi.push_back(v[static_cast<size_t>(2 * i + 1)]);
    if (!(b.lo.back() < b.hi.back())) throw saferoa::ConfigError("--box", "need lo < hi");
  }
  return b;
}

saferoa::Box certificate_box(const saferoa::Certificate& cert) {
  saferoa::Box b;
  const Json& box = cert.config.at("box");
  b.lo = box.at("lo").get<std::vector<double>>();
  b.hi = box.at("hi").get<std::vector<double>>();
  return b;
}

void add_common(CLI::App* app, CommonOptions& opt, bool needs_config) {
  auto* c = app->add_option("--config", opt.config, "run configuration (JSON)");
  if (needs_config) c->required();
  app->add_option("--out", opt.out, "output directory");
  app->add_option("--seed", opt.seed, "seed overriding the configuration");
  app->add_flag("--dry-run", opt.dry_run, "validate and print planned program sizes");
  app->add_flag("--verbose", opt.verbose, "log solver progress to stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned-model controller, Lyapunov and barrier synthesis with certified regions of attraction"};
  app.require_subcommand(1);

  CommonOptions run_opt;
  auto* run_cmd = app.add_subcommand("run", "learn, synthesize and verify from a configuration file");
  add_common(run_cmd, run_opt, true);

  CommonOptions demo_opt;
  std::string demo_name;
  std::string write_config;
  auto* demo_cmd = app.add_subcommand("demo", "run a built-in example (example1 or example2)");
  demo_cmd->add_option("name", demo_name, "example1 or example2")->required();
  demo_cmd->add_option("--write-config", write_config, "write the built-in configuration to this file and exit");
  add_common(demo_cmd, demo_opt, false);

  CommonOptions plot_opt;
  std::string plot_cert;
  int plot_grid = 0;
  std::vector<double> plot_box;
  std::vector<double> plot_slices;
  auto* plot_cmd = app.add_subcommand("export-plot", "write level-set grids and region measures for a certificate");
  plot_cmd->add_option("--certificate", plot_cert, "certificate.json")->required();
  plot_cmd->add_option("--grid", plot_grid, "points per axis");
  plot_cmd->add_option("--box", plot_box, "lo1 hi1 lo2 hi2 ...");
  plot_cmd->add_option("--slices", plot_slices, "x3 values for 3-D systems");
  add_common(plot_cmd, plot_opt, false);

  CommonOptions verify_opt;
  std::string verify_cert;
  auto* verify_cmd = app.add_subcommand("verify", "re-check a certificate and simulate the true system");
  verify_cmd->add_option("--certificate", verify_cert, "certificate.json")->required();
  add_common(verify_cmd, verify_opt, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run_cmd) {
    return guarded([&] {
      const saferoa::RunConfig cfg = load_config(read_json(run_opt.config), run_opt);
      return run_opt.dry_run ? dry_run(cfg) : run(cfg, run_opt.verbose);
    });
  }
  if (*demo_cmd) {
    return guarded([&] {
      Json j;
      try {
        j = saferoa::demo_config(demo_name);
      } catch (const std::invalid_argument& e) {
        throw saferoa::ConfigError("name", e.what());
      }
      if (!write_config.empty()) {
        std::ofstream(write_config) << j.dump(2) << "\n";
        return kExitOk;
      }
      const saferoa::RunConfig cfg = load_config(j, demo_opt);
      return demo_opt.dry_run ? dry_run(cfg) : run(cfg, demo_opt.verbose);
    });
  }
  if (*plot_cmd) {
    return guarded([&] {
      const saferoa::Certificate cert = saferoa::certificate_from_json(read_json(plot_cert));
      saferoa::PlotConfig plot;
      if (!plot_opt.config.empty()) plot = load_config(read_json(plot_opt.config), plot_opt).plot;
      if (plot.box.dim() == 0) plot.box = certificate_box(cert);
      if (!plot_box.empty()) plot.box = parse_box(plot_box, cert.n);
      if (plot_grid > 0) plot.grid = plot_grid;
      if (!plot_slices.empty()) plot.slices = plot_slices;
      const std::string dir = plot_opt.out.empty() ? "." : plot_opt.out;
      const std::uint64_t seed = plot_opt.seed.value_or(1);
      if (plot_opt.dry_run) {
        fmt::print("would write {}^2 grids to {}\n", plot.grid, dir);
        return kExitOk;
      }
      const saferoa::PlotExport ex = saferoa::export_plot(cert, plot, dir, seed);
      for (const auto& f : ex.files) fmt::print("{}\n", (std::filesystem::path(dir) / f).string());
      return kExitOk;
    });
  }
  if (*verify_cmd) {
    return guarded([&] {
      const saferoa::RunConfig cfg = load_config(read_json(verify_opt.config), verify_opt);
      const saferoa::Certificate cert = saferoa::certificate_from_json(read_json(verify_cert));
      if (cert.n != cfg.system.n) throw saferoa::ConfigError("system.n", "certificate dimension differs from the config");
      if (verify_opt.dry_run) {
        fmt::print("certificate and config are consistent (n = {})\n", cert.n);
        return kExitOk;
      }
      const saferoa::VerificationReport rep = saferoa::verify_certificate(cert, cfg.synthesis);
      const saferoa::MonteCarloReport mc = saferoa::verify_roa(cert, cfg.system, cfg.sim.verify);
      Json out;
      out["sos_verification"] = {{"passed", rep.passed()}, {"summary", rep.summary()}};
      out["monte_carlo"] = saferoa::report_to_json(mc);
      fmt::print("{}\n", out.dump(2));
      if (!verify_opt.out.empty()) {
        std::filesystem::create_directories(verify_opt.out);
        std::ofstream((std::filesystem::path(verify_opt.out) / "verify_report.json").string()) << out.dump(2) << "\n";
      }
      if (!rep.passed()) {
        std::cerr << "stage failed: verification\n";
        return kExitFailed;
      }
      if (mc.fraction_safe < 1.0) {
        std::cerr << "stage failed: monte_carlo\n";
        return kExitFailed;
      }
      return kExitOk;
    });
  }
  return kExitConfig;
}
