// avgspde: experiments for slow-fast stochastic reaction-diffusion systems.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 inconclusive result.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "avgspde/avgspde.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitInconclusive = 3;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  unsigned threads = 0;
};

avgspde::ExperimentConfig load(const GlobalOptions& g)
{
  if (g.config_path.empty()) throw avgspde::ConfigError("--config <path> is required");
  avgspde::ExperimentConfig cfg = avgspde::load_config(g.config_path);
  if (g.seed) cfg.sim.seed = *g.seed;
  if (!g.out.empty()) cfg.output = g.out;
  if (!g.mode.empty()) {
    nlohmann::json j = avgspde::serialize(cfg);
    j["mode"] = g.mode;
    cfg = avgspde::parse_config(j);
  }
  return cfg;
}

/// CSV goes to the configured output file, else stdout; the summary line goes
/// to stdout, or stderr when stdout carries the CSV.
void emit(const avgspde::ExperimentConfig& cfg, const std::string& csv, const std::string& summary)
{
  if (cfg.output.empty()) {
    std::cout << csv << std::flush;
    if (!summary.empty()) std::cerr << summary << '\n';
    return;
  }
  std::ofstream out(cfg.output, std::ios::binary);
  if (!out) throw avgspde::ConfigError("cannot write output file '" + cfg.output + "'");
  out << csv;
  if (!summary.empty()) std::cout << summary << '\n';
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Averaging experiments for slow-fast stochastic reaction-diffusion systems"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON experiment config");
  app.add_option("--seed", g.seed, "master seed (overrides sim.seed)");
  app.add_option("--out", g.out, "output CSV path (overrides output)");
  app.add_option("--mode", g.mode, "weak-order mode")->check(CLI::IsMember({"mc", "gaussian"}));
  app.add_option("--threads", g.threads, "worker threads (default: AVGSPDE_THREADS or all cores)");

  auto* simulate = app.add_subcommand("simulate", "one sample path, terminal field as CSV");
  std::string kind = "coupled";
  std::uint64_t sample = 0;
  std::optional<double> eps;
  simulate->add_option("--kind", kind, "coupled | averaged | frozen")
      ->check(CLI::IsMember({"coupled", "averaged", "frozen"}));
  simulate->add_option("--sample", sample, "sample index");
  simulate->add_option("--eps", eps, "scale parameter (overrides sim.epsilon)");

  auto* fbar = app.add_subcommand("fbar", "ergodic vs closed-form averaged drift at x0");
  auto* mixing = app.add_subcommand("mixing", "frozen-process mixing gap curve and fitted rate");
  auto* weak = app.add_subcommand("weak-order", "weak error against eps and fitted order");
  auto* expansion = app.add_subcommand("expansion", "(u^eps - ubar)/eps residual table");

  // Global options may appear before or after the subcommand.
  for (auto* sub : {simulate, fbar, mixing, weak, expansion}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  const unsigned threads = avgspde::resolve_threads(g.threads);
  try {
    const avgspde::ExperimentConfig cfg = load(g);

    if (simulate->parsed()) {
      const avgspde::Model model(cfg.model);
      avgspde::SimParams sp = cfg.sim;
      if (eps) sp.epsilon = *eps;
      const auto k = kind == "coupled"    ? avgspde::PathKind::Coupled
                     : kind == "averaged" ? avgspde::PathKind::Averaged
                                          : avgspde::PathKind::Frozen;
      const avgspde::DriftMap fb = avgspde::default_fbar(model, cfg, sample);
      const auto t = avgspde::simulate_terminal(k, model, sp, sample, cfg.initial_x(),
                                                cfg.initial_y(), fb);
      emit(cfg, avgspde::terminal_csv(t), "");
      return kExitOk;
    }

    if (fbar->parsed()) {
      emit(cfg, avgspde::fbar_csv(avgspde::fbar_table(cfg)), "");
      return kExitOk;
    }

    if (mixing->parsed()) {
      const auto r = avgspde::mixing_study(cfg, threads);
      if (!r.fit) {
        emit(cfg, avgspde::curve_csv(r.curve), "rate=nan inconclusive (too few points above noise floor)");
        return kExitInconclusive;
      }
      char buf[160];
      std::snprintf(buf, sizeof buf, "rate=%.4f beta=%.4f bound_rate=beta/2=%.4f points=%zu",
                    r.fit->rate, r.beta, 0.5 * r.beta, r.fit->points);
      emit(cfg, avgspde::curve_csv(r.curve), buf);
      return kExitOk;
    }

    if (weak->parsed()) {
      const auto rep = avgspde::run_weak_order(cfg, threads);
      emit(cfg, rep.csv(), rep.summary());
      return rep.status == avgspde::ReportStatus::Inconclusive ? kExitInconclusive : kExitOk;
    }

    if (expansion->parsed()) {
      const avgspde::Model model(cfg.model);
      if (!model.is_linear() || cfg.phi.family != avgspde::TestFamily::Cosine)
        throw avgspde::ConfigError("expansion requires the linear drift family and a cosine test function");
      const auto rows = avgspde::expansion_residual_study(model, cfg.eps_grid, cfg.sim.T,
                                                          cfg.initial_x(), cfg.initial_y(),
                                                          cfg.test_function());
      emit(cfg, avgspde::residual_csv(rows), "");
      return kExitOk;
    }
  } catch (const avgspde::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const avgspde::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const avgspde::UnsupportedOperation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const avgspde::EstimationFailure& e) {
    std::cerr << "inconclusive: " << e.what() << '\n';
    return kExitInconclusive;
  }
  return kExitInvalid;
}
