// osse_cli: command-line front end for the pipeline commands.
//
// Exit codes: 0 ok, 2 usage or config error, 3 data error, 4 numerical failure.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "osse/pipeline.hpp"

namespace fs = std::filesystem;
namespace pl = osse::pipeline;

namespace {

int exit_code(osse::ErrorKind k) {
  switch (k) {
    case osse::ErrorKind::invalid_argument: return 2;
    case osse::ErrorKind::data: return 3;
    case osse::ErrorKind::numerical: return 4;
  }
  return 1;
}

template <class T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Satellite SSH/SST observing system simulation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(OSSE_VERSION));

  std::string config_path;
  std::size_t workers = 1;
  app.add_option("-c,--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("-j,--workers", workers, "worker threads; never changes results")->check(CLI::PositiveNumber);

  const fs::path root = pl::data_root();

  auto* gen = app.add_subcommand("generate-truth", "write synthetic ssh/sst/u/v containers");
  std::string gen_out = (root / "truth").string();
  gen->add_option("-o,--out", gen_out, "output directory");

  auto* sim = app.add_subcommand("simulate-obs", "sample along-track SSH and cloudy SST observations");
  std::string sim_truth = (root / "truth").string(), sim_out = (root / "obs").string();
  int hold_out = 0;
  sim->add_option("--truth", sim_truth, "truth directory");
  sim->add_option("-o,--out", sim_out, "output directory");
  auto* hold_opt = sim->add_option("--hold-out-sat", hold_out, "also write the leave-one-satellite-out split");

  auto* rec = app.add_subcommand("reconstruct", "grid the along-track observations");
  std::string rec_obs = (root / "obs").string(), rec_out = (root / "estimate").string();
  std::string engine, loss;
  double lambda1 = 0, lambda2 = 0;
  std::size_t n_ens = 1;
  rec->add_option("--obs", rec_obs, "observation directory");
  rec->add_option("-o,--out", rec_out, "output directory");
  auto* engine_opt = rec->add_option("--engine", engine, "nearest | oi | var");
  auto* loss_opt = rec->add_option("--loss", loss, "sup | unsup | unsup_reg");
  auto* l1_opt = rec->add_option("--lambda1", lambda1, "first-derivative loss weight");
  auto* l2_opt = rec->add_option("--lambda2", lambda2, "second-derivative loss weight");
  auto* ens_opt = rec->add_option("--n-ensemble", n_ens, "ensemble members")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("evaluate", "score estimates against truth and held-out tracks");
  std::string ev_truth = (root / "truth").string(), ev_out = (root / "eval").string(), ev_held;
  std::vector<std::string> ev_est;
  bool tracks_only = false;
  ev->add_option("--truth", ev_truth, "truth directory");
  ev->add_option("--est", ev_est, "estimate as name=path or path; repeat to compare engines")->required();
  ev->add_option("--held-out", ev_held, "held-out tracks CSV");
  ev->add_option("-o,--out", ev_out, "output directory");
  ev->add_flag("--tracks-only", tracks_only, "along-track RMSE only; no truth needed");

  auto* prof = app.add_subcommand("profile-window", "RMSE against truth for every offset inside the window");
  std::string pr_truth = (root / "truth").string(), pr_obs = (root / "obs").string(),
              pr_out = (root / "profile").string(), pr_engine;
  prof->add_option("--truth", pr_truth, "truth directory");
  prof->add_option("--obs", pr_obs, "observation directory");
  prof->add_option("-o,--out", pr_out, "output directory");
  auto* pr_engine_opt = prof->add_option("--engine", pr_engine, "nearest | oi | var");

  auto* det = app.add_subcommand("detect-eddies", "detect and track eddies in an SSH container");
  std::string det_ssh = (root / "truth").string(), det_out = (root / "eddies").string();
  det->add_option("--ssh", det_ssh, "SSH container (.bin) or a truth/estimate directory");
  det->add_option("-o,--out", det_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const pl::Config cfg = config_path.empty() ? pl::Config{} : pl::Config::load(config_path);
    if (gen->parsed()) {
      pl::generate_truth_cmd(cfg, gen_out);
    } else if (sim->parsed()) {
      pl::simulate_obs_cmd(cfg, sim_truth, sim_out, opt_if(hold_opt, hold_out));
    } else if (rec->parsed()) {
      pl::ReconOverrides ov{opt_if(engine_opt, engine), opt_if(l1_opt, lambda1), opt_if(l2_opt, lambda2),
                            opt_if(ens_opt, n_ens), opt_if(loss_opt, loss)};
      pl::reconstruct_cmd(cfg, rec_obs, rec_out, ov, workers);
    } else if (ev->parsed()) {
      std::vector<std::pair<std::string, fs::path>> ests;
      for (const auto& e : ev_est) {
        const auto eq = e.find('=');
        if (eq == std::string::npos)
          ests.emplace_back(fs::path(e).filename().string(), e);
        else
          ests.emplace_back(e.substr(0, eq), e.substr(eq + 1));
      }
      std::optional<fs::path> truth;
      if (!tracks_only) truth = fs::path(ev_truth);
      std::optional<fs::path> held;
      if (!ev_held.empty()) held = fs::path(ev_held);
      pl::evaluate_cmd(cfg, truth, ests, held, ev_out, tracks_only, workers);
    } else if (prof->parsed()) {
      pl::ReconOverrides ov;
      ov.engine = opt_if(pr_engine_opt, pr_engine);
      const auto p = pl::profile_window_cmd(cfg, pr_truth, pr_obs, pr_out, ov, workers);
      if (const auto am = p.argmin()) std::printf("minimum RMSE at window offset %zu\n", *am);
    } else if (det->parsed()) {
      pl::detect_eddies_cmd(cfg, det_ssh, det_out, workers);
    }
  } catch (const osse::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
