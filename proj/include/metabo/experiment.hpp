#pragma once

#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "metabo/optimizer.hpp"
#include "metabo/synthetic.hpp"

namespace metabo {

inline constexpr const char* library_version = "0.1.0";

inline const char* gap_mode_name(GapMode m) { return m == GapMode::max ? "max" : "mean"; }
inline GapMode gap_mode_from_name(const std::string& name) {
  if (name == "max") return GapMode::max;
  if (name == "mean") return GapMode::mean;
  throw std::invalid_argument("gap_mode_from_name: unknown mode '" + name + "'");
}

inline const char* loss_form_name(LossForm f) {
  return f == LossForm::full ? "full" : "simplified";
}
inline LossForm loss_form_from_name(const std::string& name) {
  if (name == "full") return LossForm::full;
  if (name == "simplified") return LossForm::simplified;
  throw std::invalid_argument("loss_form_from_name: unknown loss form '" + name + "'");
}

inline std::string variant_label(const RunConfig& config) {
  return config.label.empty() ? algorithm_name(config.algorithm) : config.label;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Meta-task and objective persistence. Tasks live one JSON object per line:
// {"id": int, "inputs": [[float,...],...], "outputs": [float,...]}.

struct TaskRecord {
  int id = 0;
  Eigen::MatrixXd inputs;
  Eigen::VectorXd outputs;
};

namespace detail {

inline std::runtime_error record_error(std::size_t record, const std::string& what) {
  return std::runtime_error("meta-task record " + std::to_string(record) + ": " + what);
}

inline TaskRecord record_from_json(const nlohmann::json& j, std::size_t record) {
  if (!j.is_object()) throw record_error(record, "not a JSON object");
  if (!j.contains("id") || !j["id"].is_number_integer())
    throw record_error(record, "field 'id' missing or not an integer");
  if (!j.contains("inputs") || !j["inputs"].is_array() || j["inputs"].empty())
    throw record_error(record, "field 'inputs' missing or not a nonempty array");
  if (!j.contains("outputs") || !j["outputs"].is_array())
    throw record_error(record, "field 'outputs' missing or not an array");

  TaskRecord rec;
  rec.id = j["id"].get<int>();
  const auto& inputs = j["inputs"];
  const auto& outputs = j["outputs"];
  if (inputs.size() != outputs.size())
    throw record_error(record, "fields 'inputs' and 'outputs' have different lengths");

  const std::size_t dim = inputs[0].is_array() ? inputs[0].size() : 0;
  if (dim == 0) throw record_error(record, "field 'inputs' rows must be nonempty arrays");
  rec.inputs.resize(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].is_array() || inputs[i].size() != dim)
      throw record_error(record, "field 'inputs' row " + std::to_string(i) +
                                     " has inconsistent dimension");
    for (std::size_t d = 0; d < dim; ++d) {
      if (!inputs[i][d].is_number())
        throw record_error(record, "field 'inputs' row " + std::to_string(i) + " is not numeric");
      rec.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
          inputs[i][d].get<double>();
    }
  }
  rec.outputs.resize(static_cast<Eigen::Index>(outputs.size()));
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!outputs[i].is_number())
      throw record_error(record, "field 'outputs' entry " + std::to_string(i) + " is not numeric");
    rec.outputs[static_cast<Eigen::Index>(i)] = outputs[i].get<double>();
  }
  return rec;
}

inline TaskRecord parse_task_record(const std::string& line, std::size_t record) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw record_error(record, std::string("parse failure: ") + e.what());
  }
  return record_from_json(j, record);
}

}  // namespace detail

inline std::vector<TaskRecord> load_task_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_task_records: cannot open " + path);
  std::vector<TaskRecord> records;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      ++index;
      continue;
    }
    records.push_back(detail::parse_task_record(line, index));
    ++index;
  }
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].inputs.cols() != records[0].inputs.cols())
      throw std::runtime_error("load_task_records: input dimension of record " +
                               std::to_string(i) + " differs from record 0");
  return records;
}

inline void save_task_records(const std::string& path, const std::vector<TaskRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_task_records: cannot open " + path);
  for (const TaskRecord& rec : records) {
    nlohmann::json j;
    j["id"] = rec.id;
    auto inputs = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rec.inputs.rows(); ++i) {
      auto row = nlohmann::json::array();
      for (Eigen::Index d = 0; d < rec.inputs.cols(); ++d) row.push_back(rec.inputs(i, d));
      inputs.push_back(std::move(row));
    }
    j["inputs"] = std::move(inputs);
    auto outputs = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rec.outputs.size(); ++i) outputs.push_back(rec.outputs[i]);
    j["outputs"] = std::move(outputs);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_task_records: write failure on " + path);
}

inline std::vector<MetaTask> tasks_from_records(const std::vector<TaskRecord>& records,
                                                const KernelSpec& kernel) {
  std::vector<MetaTask> tasks;
  tasks.reserve(records.size());
  for (const TaskRecord& rec : records)
    tasks.emplace_back(rec.id, Dataset(rec.inputs, rec.outputs), kernel);
  return tasks;
}

inline std::vector<MetaTask> load_meta_tasks(const std::string& path, const KernelSpec& kernel) {
  return tasks_from_records(load_task_records(path), kernel);
}

// Objective file for data-driven runs: one JSON object whose inputs double as
// the candidate domain and whose outputs are returned verbatim on query.
struct ObjectiveData {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd outputs;
};

inline ObjectiveData load_objective(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_objective: cannot open " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  TaskRecord rec;
  try {
    nlohmann::json j = nlohmann::json::parse(content);
    if (j.is_object() && !j.contains("id")) j["id"] = 0;  // a lone objective needs no task id
    rec = detail::record_from_json(j, 0);
  } catch (const std::exception& e) {
    std::string what = e.what();
    if (const std::string prefix = "meta-task record 0: "; what.rfind(prefix, 0) == 0)
      what.erase(0, prefix.size());
    throw std::runtime_error("load_objective: " + what);
  }
  return {std::move(rec.inputs), std::move(rec.outputs)};
}

// ---------------------------------------------------------------------------
// Experiment orchestration.

struct RunRecord {
  int seed_index = 0;
  std::string label;
  RegretTrace trace;
};

struct ExperimentReport {
  std::string mode = "synthetic";
  SyntheticSpec spec;
  // data mode only
  std::string meta_file;
  std::string objective_file;
  std::uint64_t base_seed = 0;

  std::vector<RunConfig> variants;
  int num_seeds = 0;
  std::vector<RunRecord> records;
  std::vector<std::string> failures;
};

namespace detail {

inline void check_variants(const std::vector<RunConfig>& variants) {
  if (variants.empty()) throw std::invalid_argument("run_experiment: no variants configured");
  for (std::size_t a = 0; a < variants.size(); ++a)
    for (std::size_t b = a + 1; b < variants.size(); ++b)
      if (variant_label(variants[a]) == variant_label(variants[b]))
        throw std::invalid_argument("run_experiment: duplicate variant label '" +
                                    variant_label(variants[a]) + "'");
}

// Seeds fan out per experiment repetition; the run stream index is far above
// any per-task stream so the streams never collide.
inline std::uint64_t repetition_seed(std::uint64_t base, int k) {
  return derive_seed(base, static_cast<std::uint64_t>(k));
}
inline std::uint64_t target_seed(std::uint64_t rep_seed) { return derive_seed(rep_seed, 1); }
inline std::uint64_t task_seed(std::uint64_t rep_seed, int i) {
  return derive_seed(rep_seed, 2 + static_cast<std::uint64_t>(i));
}
inline std::uint64_t run_seed(std::uint64_t rep_seed) { return derive_seed(rep_seed, 1000000); }

// Dispatches one job per repetition index across a small worker pool; each
// worker writes only its own slots, so the result order is deterministic.
template <typename Job>
inline void dispatch_repetitions(int count, Job&& job) {
  std::atomic<int> cursor{0};
  auto worker = [&] {
    for (int k = cursor.fetch_add(1); k < count; k = cursor.fetch_add(1)) job(k);
  };
  const unsigned available = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(available, static_cast<unsigned>(count));
  if (workers <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

struct SlotResult {
  std::optional<RunRecord> record;
  std::string error;
};

inline void collect_slots(ExperimentReport& report, std::vector<SlotResult>& slots) {
  for (SlotResult& slot : slots) {
    if (!slot.error.empty())
      report.failures.push_back(slot.error);
    else if (slot.record)
      report.records.push_back(std::move(*slot.record));
  }
}

}  // namespace detail

inline ExperimentReport run_experiment(const SyntheticSpec& spec,
                                       const std::vector<RunConfig>& variants, int num_seeds) {
  spec.validate();
  detail::check_variants(variants);
  if (num_seeds < 1) throw std::invalid_argument("run_experiment: num_seeds must be >= 1");

  ExperimentReport report;
  report.mode = "synthetic";
  report.spec = spec;
  report.variants = variants;
  report.num_seeds = num_seeds;

  const Eigen::MatrixXd grid = make_grid(spec);
  const Domain domain(grid);
  const double noise_std = std::sqrt(spec.kernel.noise_variance);
  const std::size_t num_variants = variants.size();

  std::vector<detail::SlotResult> slots(static_cast<std::size_t>(num_seeds) * num_variants);
  detail::dispatch_repetitions(num_seeds, [&](int k) {
    const std::uint64_t rep = detail::repetition_seed(spec.base_seed, k);
    for (std::size_t v = 0; v < num_variants; ++v) {
      detail::SlotResult& slot = slots[static_cast<std::size_t>(k) * num_variants + v];
      const std::string label = variant_label(variants[v]);
      try {
        const Eigen::VectorXd f =
            sample_target_function(spec, grid, detail::target_seed(rep));
        const Objective objective = Objective::ground_truth(f, noise_std);
        std::vector<MetaTask> tasks;
        tasks.reserve(spec.task_sizes.size());
        for (int i = 0; i < spec.num_tasks(); ++i)
          tasks.push_back(make_meta_task(i, grid, f, spec.task_gaps[i], spec.task_sizes[i],
                                         spec.kernel, detail::task_seed(rep, i))
                              .task);
        RunConfig config = variants[v];
        config.seed = detail::run_seed(rep);
        RegretTrace trace = run(domain, objective, tasks, config);
        if (trace.incomplete)
          throw std::runtime_error("run aborted on a non-finite observation");
        slot.record = RunRecord{k, label, std::move(trace)};
      } catch (const std::exception& e) {
        slot.error = label + " seed " + std::to_string(k) + ": " + e.what();
      }
    }
  });
  detail::collect_slots(report, slots);
  return report;
}

inline ExperimentReport run_experiment(const SyntheticSpec& spec, const RunConfig& config,
                                       int num_seeds) {
  return run_experiment(spec, std::vector<RunConfig>{config}, num_seeds);
}

inline ExperimentReport run_data_experiment(const std::string& meta_file,
                                            const std::string& objective_file,
                                            const std::vector<RunConfig>& variants,
                                            int num_seeds, std::uint64_t base_seed) {
  detail::check_variants(variants);
  if (num_seeds < 1) throw std::invalid_argument("run_data_experiment: num_seeds must be >= 1");

  const std::vector<TaskRecord> task_records = load_task_records(meta_file);
  const ObjectiveData data = load_objective(objective_file);
  for (const TaskRecord& rec : task_records)
    if (rec.inputs.cols() != data.inputs.cols())
      throw std::runtime_error(
          "run_data_experiment: meta-task dimension differs from the objective's");

  ExperimentReport report;
  report.mode = "data";
  report.meta_file = meta_file;
  report.objective_file = objective_file;
  report.base_seed = base_seed;
  report.variants = variants;
  report.num_seeds = num_seeds;

  const Domain domain(data.inputs);
  const Objective objective = Objective::lookup(data.outputs);
  const std::size_t num_variants = variants.size();

  std::vector<detail::SlotResult> slots(static_cast<std::size_t>(num_seeds) * num_variants);
  detail::dispatch_repetitions(num_seeds, [&](int k) {
    const std::uint64_t rep = detail::repetition_seed(base_seed, k);
    for (std::size_t v = 0; v < num_variants; ++v) {
      detail::SlotResult& slot = slots[static_cast<std::size_t>(k) * num_variants + v];
      const std::string label = variant_label(variants[v]);
      try {
        std::vector<MetaTask> tasks =
            tasks_from_records(task_records, variants[v].target_kernel);
        RunConfig config = variants[v];
        config.seed = detail::run_seed(rep);
        RegretTrace trace = run(domain, objective, tasks, config);
        if (trace.incomplete)
          throw std::runtime_error("run aborted on a non-finite observation");
        slot.record = RunRecord{k, label, std::move(trace)};
      } catch (const std::exception& e) {
        slot.error = label + " seed " + std::to_string(k) + ": " + e.what();
      }
    }
  });
  detail::collect_slots(report, slots);
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation: mean and standard error (sample std / sqrt(n)) per iteration,
// per variant, for each exported curve.

inline std::map<std::string, std::vector<std::array<double, 2>>> aggregate_report(
    const ExperimentReport& report) {
  std::map<std::string, std::vector<std::array<double, 2>>> out;
  for (const RunConfig& variant : report.variants) {
    const std::string label = variant_label(variant);
    std::vector<const RegretTrace*> traces;
    for (const RunRecord& rec : report.records)
      if (rec.label == label) traces.push_back(&rec.trace);
    if (traces.empty()) continue;

    const std::size_t horizon = traces[0]->rows.size();
    for (const RegretTrace* trace : traces)
      if (trace->rows.size() != horizon)
        throw std::runtime_error("aggregate_report: trace lengths differ within '" + label + "'");
    const std::size_t n = traces.size();

    const auto emit = [&](const std::string& name, const std::vector<std::vector<double>>& vals) {
      std::vector<std::array<double, 2>> curve(horizon);
      for (std::size_t t = 0; t < horizon; ++t) {
        double mean = 0.0;
        for (std::size_t s = 0; s < n; ++s) mean += vals[s][t];
        mean /= static_cast<double>(n);
        double stderr_value = 0.0;
        if (n > 1) {
          double ss = 0.0;
          for (std::size_t s = 0; s < n; ++s) ss += (vals[s][t] - mean) * (vals[s][t] - mean);
          stderr_value = std::sqrt(ss / static_cast<double>(n - 1)) /
                         std::sqrt(static_cast<double>(n));
        }
        curve[t] = {mean, stderr_value};
      }
      out[label + "/" + name] = std::move(curve);
    };

    const auto collect = [&](auto&& field) {
      std::vector<std::vector<double>> vals(n, std::vector<double>(horizon));
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < horizon; ++t) vals[s][t] = field(traces[s]->rows[t]);
      return vals;
    };

    emit("simple_regret", collect([](const TraceRow& r) { return r.simple_regret; }));
    emit("cum_regret", collect([](const TraceRow& r) { return r.cum_regret; }));
    emit("nu", collect([](const TraceRow& r) { return r.nu; }));

    std::vector<std::vector<double>> best(n, std::vector<double>(horizon));
    for (std::size_t s = 0; s < n; ++s) {
      double running = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < horizon; ++t) {
        running = std::max(running, traces[s]->rows[t].y);
        best[s][t] = running;
      }
    }
    emit("best_observed", best);

    const Eigen::Index num_weights = traces[0]->rows[0].weights.size();
    for (Eigen::Index i = 0; i < num_weights; ++i)
      emit("omega_" + std::to_string(i),
           collect([i](const TraceRow& r) { return r.weights[i]; }));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest serialization. The manifest plus the library version pin every
// input of an experiment, so a rerun reproduces the traces bit for bit.

inline void to_json(nlohmann::json& j, const KernelSpec& spec) {
  j = {{"lengthscale", spec.lengthscale},
       {"signal_variance", spec.signal_variance},
       {"noise_variance", spec.noise_variance},
       {"regularization", spec.regularization}};
}

inline void from_json(const nlohmann::json& j, KernelSpec& spec) {
  j.at("lengthscale").get_to(spec.lengthscale);
  j.at("signal_variance").get_to(spec.signal_variance);
  j.at("noise_variance").get_to(spec.noise_variance);
  j.at("regularization").get_to(spec.regularization);
}

inline void to_json(nlohmann::json& j, const ConfidenceParams& params) {
  j = {{"rkhs_bound", params.rkhs_bound}, {"delta", params.delta}, {"sigma", params.sigma}};
}

inline void from_json(const nlohmann::json& j, ConfidenceParams& params) {
  j.at("rkhs_bound").get_to(params.rkhs_bound);
  j.at("delta").get_to(params.delta);
  j.at("sigma").get_to(params.sigma);
}

inline void to_json(nlohmann::json& j, const RunConfig& config) {
  j = {{"algorithm", algorithm_name(config.algorithm)},
       {"label", config.label},
       {"horizon", config.horizon},
       {"init_points", config.init_points},
       {"target_kernel", config.target_kernel},
       {"confidence", config.confidence},
       {"eta", config.eta},
       {"epsilon", config.epsilon},
       {"min_decay", config.min_decay},
       {"gap_mode", gap_mode_name(config.gap_mode)},
       {"loss_form", loss_form_name(config.loss_form)},
       {"rff_features", config.rff_features},
       {"resample_meta_each_iteration", config.resample_meta_each_iteration}};
  if (config.fixed_weights) {
    std::vector<double> w(config.fixed_weights->data(),
                          config.fixed_weights->data() + config.fixed_weights->size());
    j["fixed_weights"] = w;
  } else {
    j["fixed_weights"] = nullptr;
  }
  j["fixed_nu"] = config.fixed_nu ? nlohmann::json(*config.fixed_nu) : nlohmann::json(nullptr);
  j["fixed_beta"] = config.fixed_beta ? nlohmann::json(*config.fixed_beta) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, RunConfig& config) {
  config.algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
  j.at("label").get_to(config.label);
  j.at("horizon").get_to(config.horizon);
  j.at("init_points").get_to(config.init_points);
  j.at("target_kernel").get_to(config.target_kernel);
  j.at("confidence").get_to(config.confidence);
  j.at("eta").get_to(config.eta);
  j.at("epsilon").get_to(config.epsilon);
  j.at("min_decay").get_to(config.min_decay);
  config.gap_mode = gap_mode_from_name(j.at("gap_mode").get<std::string>());
  config.loss_form = loss_form_from_name(j.at("loss_form").get<std::string>());
  j.at("rff_features").get_to(config.rff_features);
  j.at("resample_meta_each_iteration").get_to(config.resample_meta_each_iteration);
  if (j.contains("fixed_weights") && !j["fixed_weights"].is_null()) {
    const auto w = j["fixed_weights"].get<std::vector<double>>();
    config.fixed_weights = Eigen::Map<const Eigen::VectorXd>(w.data(),
                                                             static_cast<Eigen::Index>(w.size()));
  } else {
    config.fixed_weights.reset();
  }
  config.fixed_nu = (j.contains("fixed_nu") && !j["fixed_nu"].is_null())
                        ? std::optional<double>(j["fixed_nu"].get<double>())
                        : std::nullopt;
  config.fixed_beta = (j.contains("fixed_beta") && !j["fixed_beta"].is_null())
                          ? std::optional<double>(j["fixed_beta"].get<double>())
                          : std::nullopt;
}

inline void to_json(nlohmann::json& j, const SyntheticSpec& spec) {
  j = {{"grid_points", spec.grid_points},
       {"dimension", spec.dimension},
       {"lower", spec.lower},
       {"upper", spec.upper},
       {"kernel", spec.kernel},
       {"task_sizes", spec.task_sizes},
       {"task_gaps", spec.task_gaps},
       {"base_seed", spec.base_seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& spec) {
  j.at("grid_points").get_to(spec.grid_points);
  j.at("dimension").get_to(spec.dimension);
  j.at("lower").get_to(spec.lower);
  j.at("upper").get_to(spec.upper);
  j.at("kernel").get_to(spec.kernel);
  j.at("task_sizes").get_to(spec.task_sizes);
  j.at("task_gaps").get_to(spec.task_gaps);
  j.at("base_seed").get_to(spec.base_seed);
}

inline nlohmann::json manifest_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["library_version"] = library_version;
  j["mode"] = report.mode;
  j["num_seeds"] = report.num_seeds;
  j["variants"] = report.variants;
  if (report.mode == "synthetic") {
    j["synthetic"] = report.spec;
  } else {
    j["data"] = {{"meta_file", report.meta_file},
                 {"objective_file", report.objective_file},
                 {"base_seed", report.base_seed}};
  }
  return j;
}

inline ExperimentReport run_from_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("run_from_manifest: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("run_from_manifest: parse failure: " + std::string(e.what()));
  }
  const std::string mode = j.at("mode").get<std::string>();
  const auto variants = j.at("variants").get<std::vector<RunConfig>>();
  const int num_seeds = j.at("num_seeds").get<int>();
  if (mode == "synthetic")
    return run_experiment(j.at("synthetic").get<SyntheticSpec>(), variants, num_seeds);
  if (mode == "data") {
    const auto& data = j.at("data");
    return run_data_experiment(data.at("meta_file").get<std::string>(),
                               data.at("objective_file").get<std::string>(), variants, num_seeds,
                               data.at("base_seed").get<std::uint64_t>());
  }
  throw std::runtime_error("run_from_manifest: unknown mode '" + mode + "'");
}

// ---------------------------------------------------------------------------
// Export: raw traces as CSV, aggregate curves and the manifest as JSON.

namespace detail {

inline std::string csv_point(const Eigen::VectorXd& x) {
  std::string s;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    if (d > 0) s += ';';
    s += format_double(x[d]);
  }
  return s;
}

}  // namespace detail

inline std::vector<std::filesystem::path> export_report(const ExperimentReport& report,
                                                        const std::filesystem::path& out_dir) {
  if (report.records.empty()) throw std::invalid_argument("export_report: report holds no runs");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("export_report: cannot create " + out_dir.string());

  Eigen::Index num_weights = 0;
  for (const RunRecord& rec : report.records)
    for (const TraceRow& row : rec.trace.rows)
      num_weights = std::max(num_weights, row.weights.size());

  const std::filesystem::path csv_path = out_dir / "traces.csv";
  {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("export_report: cannot open " + csv_path.string());
    out << "seed,algorithm,t,x,y,inst_regret,cum_regret,simple_regret,nu,beta";
    for (Eigen::Index i = 0; i < num_weights; ++i) out << ",omega_" << i;
    out << '\n';
    for (const RunRecord& rec : report.records) {
      for (const TraceRow& row : rec.trace.rows) {
        out << rec.seed_index << ',' << rec.label << ',' << row.t << ','
            << detail::csv_point(row.x) << ',' << format_double(row.y) << ','
            << format_double(row.inst_regret) << ',' << format_double(row.cum_regret) << ','
            << format_double(row.simple_regret) << ',' << format_double(row.nu) << ','
            << format_double(row.beta);
        for (Eigen::Index i = 0; i < num_weights; ++i)
          out << ','
              << (i < row.weights.size() ? format_double(row.weights[i]) : std::string("nan"));
        out << '\n';
      }
    }
    if (!out) throw std::runtime_error("export_report: write failure on " + csv_path.string());
  }

  const std::filesystem::path agg_path = out_dir / "aggregates.json";
  {
    nlohmann::json j(aggregate_report(report));
    std::ofstream out(agg_path);
    if (!out) throw std::runtime_error("export_report: cannot open " + agg_path.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("export_report: write failure on " + agg_path.string());
  }

  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  {
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("export_report: cannot open " + manifest_path.string());
    out << manifest_json(report).dump(2) << '\n';
    if (!out)
      throw std::runtime_error("export_report: write failure on " + manifest_path.string());
  }
  return {csv_path, agg_path, manifest_path};
}

// Rebuilds a minimal report from an exported traces.csv so the aggregate file
// can be regenerated without rerunning anything. Labels keep their order of
// first appearance; x is not reconstructed.
inline ExperimentReport report_from_traces_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("report_from_traces_csv: cannot open " + path);
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("report_from_traces_csv: empty file " + path);
  std::vector<std::string> columns;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) columns.push_back(col);
  }
  const std::vector<std::string> fixed = {"seed",       "algorithm",  "t",
                                          "x",          "y",          "inst_regret",
                                          "cum_regret", "simple_regret", "nu", "beta"};
  if (columns.size() < fixed.size())
    throw std::runtime_error("report_from_traces_csv: unexpected header in " + path);
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (columns[i] != fixed[i])
      throw std::runtime_error("report_from_traces_csv: unexpected column '" + columns[i] + "'");
  const std::size_t num_weights = columns.size() - fixed.size();

  ExperimentReport report;
  report.mode = "reimport";
  std::map<std::pair<std::string, int>, std::size_t> slot_of;

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns.size())
      throw std::runtime_error("report_from_traces_csv: row " + std::to_string(line_no) +
                               " has " + std::to_string(cells.size()) + " cells");
    const auto num = [&](std::size_t i) { return std::strtod(cells[i].c_str(), nullptr); };

    TraceRow row;
    const int seed_index = static_cast<int>(std::strtol(cells[0].c_str(), nullptr, 10));
    const std::string& label = cells[1];
    row.t = static_cast<int>(std::strtol(cells[2].c_str(), nullptr, 10));
    row.y = num(4);
    row.inst_regret = num(5);
    row.cum_regret = num(6);
    row.simple_regret = num(7);
    row.nu = num(8);
    row.beta = num(9);
    bool any_weight = false;
    Eigen::VectorXd weights(static_cast<Eigen::Index>(num_weights));
    for (std::size_t i = 0; i < num_weights; ++i) {
      weights[static_cast<Eigen::Index>(i)] = num(fixed.size() + i);
      if (!std::isnan(weights[static_cast<Eigen::Index>(i)])) any_weight = true;
    }
    if (any_weight) row.weights = std::move(weights);

    const auto key = std::make_pair(label, seed_index);
    auto found = slot_of.find(key);
    if (found == slot_of.end()) {
      found = slot_of.emplace(key, report.records.size()).first;
      report.records.push_back(RunRecord{seed_index, label, RegretTrace{}});
      bool known = false;
      for (const RunConfig& v : report.variants) known = known || variant_label(v) == label;
      if (!known) {
        RunConfig config;
        config.label = label;
        report.variants.push_back(std::move(config));
      }
    }
    report.records[found->second].trace.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace metabo
