#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metabo/experiment.hpp"

namespace {

std::vector<double> split_doubles(const std::string& csv, const std::string& flag) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw std::invalid_argument(flag + ": cannot parse '" + cell + "' as a number");
    }
  }
  if (values.empty()) throw std::invalid_argument(flag + ": empty list");
  return values;
}

std::vector<int> split_ints(const std::string& csv, const std::string& flag) {
  std::vector<int> values;
  for (double v : split_doubles(csv, flag)) {
    if (v != static_cast<int>(v)) throw std::invalid_argument(flag + ": expected integers");
    values.push_back(static_cast<int>(v));
  }
  return values;
}

// Flags shared by the synthetic and data subcommands.
struct RunFlags {
  std::vector<std::string> algorithms = {"rm-gp-ucb"};
  int seeds = 20;
  std::uint64_t seed = 0;
  int horizon = 50;
  int init_points = 2;
  double eta = 0.05;
  double epsilon = 0.7;
  double min_decay = 0.7;
  std::string gap_mode = "mean";
  std::string loss_form = "simplified";
  int rff_features = 120;
  double delta = 0.1;
  double rkhs_bound = 1.0;
  double sigma = -1.0;   // < 0: use sqrt of the noise variance
  double lambda = -1.0;  // < 0: use 1 + 2/horizon
  std::string fixed_weights;
  double fixed_nu = -1.0;  // < 0: adaptive schedule
  std::string out = "bench-out";
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--algo", flags.algorithms,
                  "algorithm to run: rm-gp-ucb, rm-gp-ts, or gp-ucb (repeatable)");
  cmd->add_option("--seeds", flags.seeds, "number of repetitions");
  cmd->add_option("--seed", flags.seed, "base seed all repetition streams derive from");
  cmd->add_option("--horizon", flags.horizon, "queries per run");
  cmd->add_option("--init-points", flags.init_points, "random observations before the loop");
  cmd->add_option("--eta", flags.eta, "FTRL learning rate");
  cmd->add_option("--epsilon", flags.epsilon, "meta-influence decay exponent");
  cmd->add_option("--r", flags.min_decay, "slowest per-step meta-influence decay, in (0,1)");
  cmd->add_option("--gap-mode", flags.gap_mode, "gap aggregation: mean or max");
  cmd->add_option("--loss-form", flags.loss_form, "weight-update loss: simplified or full");
  cmd->add_option("--rff-m", flags.rff_features, "random Fourier features per sampler");
  cmd->add_option("--delta", flags.delta, "confidence level in (0,1)");
  cmd->add_option("--rkhs-bound", flags.rkhs_bound, "smoothness budget B");
  cmd->add_option("--sigma", flags.sigma,
                  "noise scale in the confidence widths (default: sqrt of --noise)");
  cmd->add_option("--lambda", flags.lambda,
                  "target surrogate regularization (default: 1 + 2/horizon)");
  cmd->add_option("--fixed-weights", flags.fixed_weights,
                  "'uniform' or comma-separated weights; disables the weight update");
  cmd->add_option("--fixed-nu", flags.fixed_nu, "pin the meta influence to a constant in [0,1]");
  cmd->add_option("--out", flags.out, "output directory");
}

metabo::KernelSpec target_kernel_from(const RunFlags& flags, const metabo::KernelSpec& base) {
  metabo::KernelSpec kernel = base;
  kernel.regularization =
      flags.lambda < 0.0 ? 1.0 + 2.0 / static_cast<double>(flags.horizon) : flags.lambda;
  return kernel;
}

std::vector<metabo::RunConfig> build_variants(const RunFlags& flags,
                                              const metabo::KernelSpec& target_kernel,
                                              int num_tasks) {
  if (flags.algorithms.empty()) throw std::invalid_argument("--algo: at least one required");
  std::optional<Eigen::VectorXd> fixed_weights;
  if (!flags.fixed_weights.empty()) {
    if (flags.fixed_weights == "uniform") {
      if (num_tasks < 1)
        throw std::invalid_argument("--fixed-weights uniform: no meta-tasks configured");
      fixed_weights = Eigen::VectorXd::Constant(num_tasks, 1.0 / num_tasks);
    } else {
      const auto w = split_doubles(flags.fixed_weights, "--fixed-weights");
      fixed_weights =
          Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    }
  }

  std::vector<metabo::RunConfig> variants;
  for (const std::string& name : flags.algorithms) {
    metabo::RunConfig config;
    config.algorithm = metabo::algorithm_from_name(name);
    config.horizon = flags.horizon;
    config.init_points = flags.init_points;
    config.target_kernel = target_kernel;
    config.confidence.rkhs_bound = flags.rkhs_bound;
    config.confidence.delta = flags.delta;
    config.confidence.sigma =
        flags.sigma < 0.0 ? std::sqrt(target_kernel.noise_variance) : flags.sigma;
    config.eta = flags.eta;
    config.epsilon = flags.epsilon;
    config.min_decay = flags.min_decay;
    config.gap_mode = metabo::gap_mode_from_name(flags.gap_mode);
    config.loss_form = metabo::loss_form_from_name(flags.loss_form);
    config.rff_features = flags.rff_features;
    config.fixed_weights = fixed_weights;
    if (flags.fixed_nu >= 0.0) config.fixed_nu = flags.fixed_nu;
    const bool pinned = fixed_weights.has_value() || flags.fixed_nu >= 0.0;
    config.label = name + (pinned ? "-fixed" : "");
    variants.push_back(std::move(config));
  }
  return variants;
}

int finish(const metabo::ExperimentReport& report, const std::string& out_dir) {
  if (report.records.empty()) {
    for (const std::string& failure : report.failures)
      std::cerr << "run failure: " << failure << '\n';
    std::cerr << "no run completed; nothing to export\n";
    return 2;
  }
  const auto files = metabo::export_report(report, out_dir);
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';

  const auto curves = metabo::aggregate_report(report);
  for (const metabo::RunConfig& variant : report.variants) {
    const std::string label = metabo::variant_label(variant);
    const std::string key = report.mode == "data" ? "/best_observed" : "/simple_regret";
    const auto found = curves.find(label + key);
    if (found == curves.end() || found->second.empty()) continue;
    const auto& last = found->second.back();
    std::cout << label << ": final " << (report.mode == "data" ? "best observed" : "simple regret")
              << " " << last[0] << " +- " << last[1] << " over " << report.num_seeds
              << " repetitions\n";
  }
  if (!report.failures.empty()) {
    for (const std::string& failure : report.failures)
      std::cerr << "run failure: " << failure << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust meta-Bayesian optimization benchmark"};
  app.require_subcommand(1);

  auto* synthetic = app.add_subcommand("synthetic", "GP-drawn target with perturbed meta-tasks");
  RunFlags syn_flags;
  int grid_points = 300;
  int dimension = 1;
  double lengthscale = 0.05;
  double signal_variance = 1.0;
  double noise_variance = 0.01;
  std::string task_sizes = "20,20,20,20";
  std::string task_gaps = "0.05,0.05,4,4";
  add_run_flags(synthetic, syn_flags);
  synthetic->add_option("--grid", grid_points, "grid points per axis");
  synthetic->add_option("--dimension", dimension, "input dimension");
  synthetic->add_option("--lengthscale", lengthscale, "kernel lengthscale");
  synthetic->add_option("--signal-variance", signal_variance, "kernel signal variance");
  synthetic->add_option("--noise", noise_variance, "observation noise variance");
  synthetic->add_option("--task-sizes", task_sizes, "comma-separated meta-task sizes");
  synthetic->add_option("--task-gaps", task_gaps, "comma-separated meta-task gap magnitudes");

  auto* run_data = app.add_subcommand("run-data", "optimize a tabulated objective from files");
  RunFlags data_flags;
  std::string meta_file;
  std::string objective_file;
  double data_lengthscale = 0.05;
  double data_signal_variance = 1.0;
  double data_noise_variance = 0.01;
  add_run_flags(run_data, data_flags);
  run_data->add_option("--meta-file", meta_file, "line-JSON meta-task file")->required();
  run_data->add_option("--objective-file", objective_file, "JSON objective table")->required();
  run_data->add_option("--lengthscale", data_lengthscale, "surrogate kernel lengthscale");
  run_data->add_option("--signal-variance", data_signal_variance, "surrogate kernel signal variance");
  run_data->add_option("--noise", data_noise_variance, "surrogate observation noise variance");

  auto* export_only = app.add_subcommand("export-only", "re-aggregate a stored traces.csv");
  std::string export_in;
  std::string export_out;
  export_only->add_option("--in", export_in, "directory holding traces.csv")->required();
  export_only->add_option("--out", export_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (synthetic->parsed()) {
    metabo::SyntheticSpec spec;
    std::vector<metabo::RunConfig> variants;
    try {
      spec.grid_points = grid_points;
      spec.dimension = dimension;
      spec.kernel.lengthscale = lengthscale;
      spec.kernel.signal_variance = signal_variance;
      spec.kernel.noise_variance = noise_variance;
      spec.task_sizes = split_ints(task_sizes, "--task-sizes");
      spec.task_gaps = split_doubles(task_gaps, "--task-gaps");
      spec.base_seed = syn_flags.seed;
      spec.validate();
      if (syn_flags.seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
      variants = build_variants(syn_flags, target_kernel_from(syn_flags, spec.kernel),
                                spec.num_tasks());
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 1;
    }
    try {
      return finish(metabo::run_experiment(spec, variants, syn_flags.seeds), syn_flags.out);
    } catch (const std::exception& e) {
      std::cerr << "runtime error: " << e.what() << '\n';
      return 2;
    }
  }

  if (run_data->parsed()) {
    std::vector<metabo::RunConfig> variants;
    try {
      // surface unreadable or malformed inputs before any run starts
      const auto records = metabo::load_task_records(meta_file);
      metabo::load_objective(objective_file);
      metabo::KernelSpec kernel;
      kernel.lengthscale = data_lengthscale;
      kernel.signal_variance = data_signal_variance;
      kernel.noise_variance = data_noise_variance;
      if (data_flags.seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
      variants = build_variants(data_flags, target_kernel_from(data_flags, kernel),
                                static_cast<int>(records.size()));
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 1;
    }
    try {
      return finish(metabo::run_data_experiment(meta_file, objective_file, variants,
                                                data_flags.seeds, data_flags.seed),
                    data_flags.out);
    } catch (const std::exception& e) {
      std::cerr << "runtime error: " << e.what() << '\n';
      return 2;
    }
  }

  // export-only
  const std::filesystem::path traces = std::filesystem::path(export_in) / "traces.csv";
  try {
    if (!std::filesystem::exists(traces))
      throw std::invalid_argument("no traces.csv under " + export_in);
    if (export_out.empty()) export_out = export_in;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  try {
    const metabo::ExperimentReport report = metabo::report_from_traces_csv(traces.string());
    const nlohmann::json j(metabo::aggregate_report(report));
    std::filesystem::create_directories(export_out);
    const std::filesystem::path out_path = std::filesystem::path(export_out) / "aggregates.json";
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failure on " + out_path.string());
    std::cout << "wrote " << out_path.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
}
