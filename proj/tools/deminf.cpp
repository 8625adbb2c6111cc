// deminf: score, filter and evaluate demonstration datasets by their
// contribution to state-action mutual information.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "deminf/curation.hpp"
#include "deminf/dataset.hpp"
#include "deminf/error.hpp"
#include "deminf/pipeline.hpp"
#include "deminf/simd/kernels.hpp"
#include "deminf/synth.hpp"

namespace {

using namespace deminf;
namespace fs = std::filesystem;

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t default_threads() {
  if (const char* env = std::getenv("DEMINF_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("DEMINF_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mutual-information scoring and curation of demonstration datasets"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::size_t> threads_flag;
  std::string kernels = "auto";
  app.add_option("--threads", threads_flag, "Worker threads (1 = bit-exact reference mode)")
      ->check(CLI::PositiveNumber);
  app.add_option("--kernels", kernels, "Kernel variant: auto, scalar or avx2")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  // synth-gaussian
  auto* g_cmd = app.add_subcommand("synth-gaussian", "Correlated Gaussian pairs with known mutual information");
  std::size_t g_n = 4096, g_dim = 1;
  double g_rho = 0.0;
  std::uint64_t g_seed = 0;
  std::string g_out;
  g_cmd->add_option("--n", g_n, "Samples")->check(CLI::PositiveNumber);
  g_cmd->add_option("--dim", g_dim, "Paired dimensions")->check(CLI::PositiveNumber);
  g_cmd->add_option("--rho", g_rho, "Per-dimension correlation, |rho| < 1")->required();
  g_cmd->add_option("--seed", g_seed, "Seed");
  g_cmd->add_option("--out", g_out, "Output CSV")->required();

  // synth-demos
  auto* d_cmd = app.add_subcommand("synth-demos", "Scripted point-mass demonstrations with quality labels");
  std::size_t d_per_level = 30;
  std::uint64_t d_seed = 0;
  std::string d_out;
  d_cmd->add_option("--per-level", d_per_level, "Trajectories per quality level")->check(CLI::PositiveNumber);
  d_cmd->add_option("--seed", d_seed, "Seed");
  d_cmd->add_option("--out", d_out, "Output JSONL")->required();

  // score
  auto* s_cmd = app.add_subcommand("score", "Score every step and trajectory of a dataset");
  std::string s_method, s_data, s_config, s_out;
  s_cmd->add_option("--method", s_method, "deminf|biksg|kl|mine|infonce|vip|compat|uncertainty|policyloss")
      ->required();
  s_cmd->add_option("--data", s_data, "Trajectory JSONL")->required();
  s_cmd->add_option("--config", s_config, "Config JSON (defaults when omitted)");
  s_cmd->add_option("--out", s_out, "Output prefix")->required();

  // filter
  auto* f_cmd = app.add_subcommand("filter", "Keep trajectories by score");
  std::string f_scores, f_data, f_out;
  std::optional<double> f_kappa, f_keep;
  f_cmd->add_option("--scores", f_scores, "Trajectory score CSV")->required();
  f_cmd->add_option("--data", f_data, "Trajectory JSONL")->required();
  auto* kappa_opt = f_cmd->add_option("--kappa", f_kappa, "Keep scores strictly above kappa");
  auto* keep_opt = f_cmd->add_option("--keep-frac", f_keep, "Keep the top ceil(f*n) trajectories")
                       ->check(CLI::Range(0.0, 1.0));
  kappa_opt->excludes(keep_opt);
  f_cmd->add_option("--out", f_out, "Output JSONL")->required();

  // curve
  auto* c_cmd = app.add_subcommand("curve", "Quality curve and evaluation report");
  std::string c_scores, c_data, c_out;
  c_cmd->add_option("--scores", c_scores, "Trajectory score CSV")->required();
  c_cmd->add_option("--data", c_data, "Trajectory JSONL with quality labels")->required();
  c_cmd->add_option("--out", c_out, "Output prefix")->required();

  // mi-selftest
  auto* t_cmd = app.add_subcommand("mi-selftest", "Validate the estimators against closed-form mutual information");
  std::string t_out;
  t_cmd->add_option("--out", t_out, "Optional JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    if (kernels != "auto") simd::set_active(simd::parse_isa(kernels));
    const std::size_t threads = threads_flag ? *threads_flag : default_threads();
    RunManifest manifest;
    manifest.threads = threads;

    if (*g_cmd) {
      if (!(std::abs(g_rho) < 1.0)) throw UsageError("--rho must satisfy |rho| < 1");
      const synth::GaussianSpec spec{g_n, g_dim, g_rho, g_seed};
      const auto g = synth::gen_gaussian_pairs(spec);
      const fs::path out = g_out;
      curation::write_file_atomic(out, synth::gaussian_csv(g.pairs));
      curation::write_file_atomic(with_suffix(out, ".json"), synth::gaussian_sidecar(spec, g.true_mi).dump(2) + "\n");
      manifest.command = "synth-gaussian";
      manifest.config = synth::gaussian_sidecar(spec, g.true_mi);
      manifest.seed = g_seed;
      manifest.outputs = {out.string(), with_suffix(out, ".json").string()};
      manifest.wall_seconds = seconds_since(start);
      manifest.write(with_suffix(out, ".manifest.json"));
      std::cout << "true_mi=" << curation::format_double(g.true_mi) << " nats\n";
    } else if (*d_cmd) {
      const auto spec = synth::PointMassSpec::defaults(d_per_level, d_seed);
      const auto ds = synth::gen_pointmass(spec);
      const fs::path out = d_out;
      curation::write_file_atomic(out, to_jsonl(ds));
      manifest.command = "synth-demos";
      manifest.config = {{"per_level", d_per_level}, {"horizon", spec.horizon}};
      manifest.seed = d_seed;
      manifest.outputs = {out.string()};
      manifest.wall_seconds = seconds_since(start);
      manifest.write(with_suffix(out, ".manifest.json"));
      std::cout << ds.num_trajectories() << " trajectories, " << ds.num_steps() << " steps\n";
    } else if (*s_cmd) {
      est::Method method;
      try {
        method = est::parse_method(s_method);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const CurationConfig config = s_config.empty() ? CurationConfig{} : CurationConfig::load(s_config);
      const DemoDataset ds = load_jsonl(s_data);
      const ScoreRun run = score_dataset(method, ds, config, threads);
      const fs::path out = s_out;
      const auto steps_csv = with_suffix(out, ".steps.csv");
      const auto steps_json = with_suffix(out, ".steps.json");
      const auto traj_csv = with_suffix(out, ".traj.csv");
      curation::write_file_atomic(steps_csv, curation::step_scores_csv(run.steps, ds));
      curation::write_file_atomic(steps_json, step_sidecar(run, method, config).dump(2) + "\n");
      curation::write_file_atomic(traj_csv, curation::traj_scores_csv(run.trajectories));
      manifest.command = "score --method " + s_method;
      manifest.config = config.to_json();
      manifest.seed = config.seed;
      manifest.inputs = {s_data};
      if (!s_config.empty()) manifest.inputs.push_back(s_config);
      manifest.outputs = {steps_csv.string(), steps_json.string(), traj_csv.string()};
      manifest.wall_seconds = seconds_since(start);
      manifest.write(with_suffix(out, ".manifest.json"));
      std::cout << "scored " << run.trajectories.size() << " trajectories (" << ds.num_steps() << " steps) with "
                << s_method << '\n';
    } else if (*f_cmd) {
      if (!f_kappa && !f_keep) throw UsageError("filter needs --kappa or --keep-frac");
      const DemoDataset ds = load_jsonl(f_data);
      const auto scores = curation::parse_traj_scores_csv(curation::read_file(f_scores));
      const DemoDataset kept = f_kappa ? curation::filter(ds, scores, *f_kappa)
                                       : curation::keep_top_fraction(ds, scores, *f_keep);
      const fs::path out = f_out;
      curation::write_file_atomic(out, to_jsonl(kept));
      manifest.command = "filter";
      manifest.config = f_kappa ? nlohmann::json{{"kappa", *f_kappa}} : nlohmann::json{{"keep_frac", *f_keep}};
      manifest.inputs = {f_scores, f_data};
      manifest.outputs = {out.string()};
      manifest.wall_seconds = seconds_since(start);
      manifest.write(with_suffix(out, ".manifest.json"));
      if (kept.num_trajectories() == 0) std::cerr << "warning: no trajectory passed the filter\n";
      std::cout << "kept " << kept.num_trajectories() << " of " << ds.num_trajectories() << " trajectories\n";
    } else if (*c_cmd) {
      const DemoDataset ds = load_jsonl(c_data);
      auto scores = curation::parse_traj_scores_csv(curation::read_file(c_scores));
      if (scores.size() != ds.num_trajectories()) throw UsageError("scores and dataset disagree on trajectory count");
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores.entries[i].id != ds.trajectory(i).id) throw UsageError("scores and dataset ids disagree");
        scores.entries[i].quality = ds.trajectory(i).quality;
      }
      const auto report = curation::evaluate(scores);
      const fs::path out = c_out;
      const auto curve_path = with_suffix(out, ".curve.csv");
      const auto report_json = with_suffix(out, ".report.json");
      const auto report_csv = with_suffix(out, ".report.csv");
      curation::write_file_atomic(curve_path, curation::curve_csv(report.curve));
      curation::write_file_atomic(report_json, report.to_json().dump(2) + "\n");
      curation::write_file_atomic(report_csv, "spearman,area_vs_random,oracle_area_vs_random\n" +
                                                  curation::format_double(report.spearman) + ',' +
                                                  curation::format_double(report.area_vs_random) + ',' +
                                                  curation::format_double(report.oracle_area_vs_random) + '\n');
      manifest.command = "curve";
      manifest.inputs = {c_scores, c_data};
      manifest.outputs = {curve_path.string(), report_json.string(), report_csv.string()};
      manifest.wall_seconds = seconds_since(start);
      manifest.write(with_suffix(out, ".manifest.json"));
      std::cout << "spearman=" << report.spearman << " area_vs_random=" << report.area_vs_random << '\n';
    } else if (*t_cmd) {
      const auto report = run_selftest(&std::cout, threads);
      if (!t_out.empty()) {
        curation::write_file_atomic(t_out, report.to_json().dump(2) + "\n");
        manifest.command = "mi-selftest";
        manifest.outputs = {t_out};
        manifest.wall_seconds = seconds_since(start);
        manifest.write(with_suffix(fs::path(t_out), ".manifest.json"));
      }
      std::cout << (report.all_pass() ? "all checks passed\n" : "SELFTEST FAILED\n");
      return report.all_pass() ? 0 : 1;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
