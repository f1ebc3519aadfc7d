#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "adasamp/config.hpp"
#include "adasamp/data.hpp"
#include "adasamp/error.hpp"
#include "adasamp/optimizers.hpp"
#include "adasamp/problems.hpp"
#include "adasamp/rng.hpp"

namespace adasamp {

enum class ProblemKind { context_shift, concept_shift, libsvm };
enum class Loss { least_squares, logistic };

struct ProblemSpec {
  ProblemKind kind = ProblemKind::context_shift;
  Loss loss = Loss::least_squares;
  double ridge = 0.0;
  ContextShiftSpec context;
  ConceptShiftSpec concept_;
  std::string path;
  std::optional<std::size_t> dim_hint;
  /// Regenerate synthetic data for every repeat (seed mixed with the repeat).
  bool resample_per_repeat = false;
};

struct ArmConfig {
  std::string name;
  RunConfig run;
};

struct MetricToggles {
  bool v_eff = true;
  bool v_sampling = false;
  bool D = false;
  bool psi = false;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<ArmConfig> arms;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  MetricToggles metrics;
  bool record_timing = false;
  std::string output_dir;
  std::vector<double> tune_grid;
};

/// `a,b,c` or `linspace(lo, hi, k)`.
inline std::vector<double> parse_rate_grid(const std::string& text) {
  const std::string s = KeyValueConfig::trim(text);
  std::vector<double> out;
  if (s.rfind("linspace(", 0) == 0 && s.back() == ')') {
    const auto parts = KeyValueConfig::split_list(std::string_view(s).substr(9, s.size() - 10));
    if (parts.size() != 3) throw Fault("linspace needs (lo, hi, count)");
    const double lo = KeyValueConfig::to_real("tune.grid", parts[0]);
    const double hi = KeyValueConfig::to_real("tune.grid", parts[1]);
    const double k = KeyValueConfig::to_real("tune.grid", parts[2]);
    if (!(k >= 1.0) || k != std::floor(k)) throw Fault("linspace count must be a positive integer");
    const auto count = static_cast<std::size_t>(k);
    for (std::size_t j = 0; j < count; ++j)
      out.push_back(count == 1 ? lo : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(count - 1));
    return out;
  }
  for (const auto& item : KeyValueConfig::split_list(s)) out.push_back(KeyValueConfig::to_real("tune.grid", item));
  return out;
}

namespace detail {

inline bool valid_arm_name(const std::string& name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

}  // namespace detail

/// Builds an ExperimentConfig from `key = value` entries:
///
///   problem.kind = context_shift | concept_shift | libsvm
///   problem.n, problem.d, problem.sigma, problem.nu, problem.seed
///   problem.path, problem.dim, problem.loss = least_squares | logistic, problem.ridge
///   problem.resample = true|false
///   experiment.repeats, experiment.seed, experiment.record_every, experiment.T
///   experiment.metrics = subopt,v_eff,v,D,psi
///   arm.<name>.algorithm|sampler|eta|rho|batch|T|average|alpha|abar|theta1|theta2|L
///   output.dir, output.timing
///   tune.grid = linspace(0.05, 1, 20)
inline ExperimentConfig experiment_from(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  ProblemSpec& p = cfg.problem;

  const std::string kind = kv.get_string("problem.kind", "context_shift");
  if (kind == "context_shift") p.kind = ProblemKind::context_shift;
  else if (kind == "concept_shift") p.kind = ProblemKind::concept_shift;
  else if (kind == "libsvm") p.kind = ProblemKind::libsvm;
  else throw Fault("unknown problem.kind '" + kind + "'");

  const std::string loss = kv.get_string("problem.loss", p.kind == ProblemKind::libsvm ? "logistic" : "least_squares");
  if (loss == "least_squares") p.loss = Loss::least_squares;
  else if (loss == "logistic") p.loss = Loss::logistic;
  else throw Fault("unknown problem.loss '" + loss + "'");
  p.ridge = kv.get_real("problem.ridge", 0.0);
  p.resample_per_repeat = kv.get_bool("problem.resample", false);

  const std::uint64_t data_seed = kv.get_unsigned("problem.seed", 0);
  p.context.n = kv.get_unsigned("problem.n", 100);
  p.context.d = kv.get_unsigned("problem.d", 10);
  p.context.sigma = kv.get_real("problem.sigma", 1.0);
  p.context.nu = kv.get_real("problem.nu", 1.0);
  p.context.seed = data_seed;
  p.concept_.n = kv.get_unsigned("problem.n", 300);
  p.concept_.d = kv.get_unsigned("problem.d", 30);
  p.concept_.nu = kv.get_real("problem.nu", 1.0);
  p.concept_.seed = data_seed;
  if (p.kind == ProblemKind::libsvm) p.path = kv.require("problem.path");
  if (auto dim = kv.get_unsigned("problem.dim")) p.dim_hint = static_cast<std::size_t>(*dim);

  cfg.repeats = kv.get_unsigned("experiment.repeats", 1);
  if (cfg.repeats < 1) throw Fault("experiment.repeats must be >= 1");
  cfg.seed = kv.get_unsigned("experiment.seed", 0);
  cfg.record_every = kv.get_unsigned("experiment.record_every", 1);
  if (cfg.record_every < 1) throw Fault("experiment.record_every must be >= 1");
  const std::size_t default_T = kv.get_unsigned("experiment.T", 1000);

  if (auto m = kv.get("experiment.metrics")) {
    cfg.metrics = MetricToggles{false, false, false, false};
    for (const auto& item : KeyValueConfig::split_list(*m)) {
      if (item == "subopt") continue;  // always recorded
      if (item == "v_eff") cfg.metrics.v_eff = true;
      else if (item == "v") cfg.metrics.v_sampling = true;
      else if (item == "D") cfg.metrics.D = true;
      else if (item == "psi") cfg.metrics.psi = true;
      else throw Fault("unknown metric '" + item + "'");
    }
  }

  cfg.output_dir = kv.get_string("output.dir", "");
  cfg.record_timing = kv.get_bool("output.timing", false);
  cfg.tune_grid = parse_rate_grid(kv.get_string("tune.grid", "linspace(0.05, 1, 20)"));

  // Arms in first-appearance order; the position is the arm index used for seeding.
  std::vector<std::string> names;
  for (const auto& key : kv.keys()) {
    if (key.rfind("arm.", 0) != 0) continue;
    const auto dot = key.find('.', 4);
    if (dot == std::string::npos) throw Fault("arm key '" + key + "' needs arm.<name>.<field>");
    const std::string name = key.substr(4, dot - 4);
    if (!detail::valid_arm_name(name)) throw Fault("invalid arm name '" + name + "'");
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  }
  if (names.empty()) throw Fault("config defines no arms");

  static const std::vector<std::string> kArmFields = {"algorithm", "sampler", "eta",   "rho",    "batch", "T",
                                                      "average",   "alpha",   "abar",  "theta1", "theta2", "L"};
  for (const auto& key : kv.keys()) {
    if (key.rfind("arm.", 0) != 0) continue;
    const std::string field = key.substr(key.find('.', 4) + 1);
    if (std::find(kArmFields.begin(), kArmFields.end(), field) == kArmFields.end())
      throw Fault("unknown arm field '" + key + "'");
  }

  for (const auto& name : names) {
    const std::string pre = "arm." + name + ".";
    ArmConfig arm;
    arm.name = name;
    RunConfig& r = arm.run;
    r.algorithm = parse_algorithm(kv.get_string(pre + "algorithm", "lsvrg"));
    r.sampler = parse_sampler(kv.get_string(pre + "sampler", "uniform"));
    r.eta = kv.get_real(pre + "eta");
    r.rho = kv.get_real(pre + "rho");
    r.batch = kv.get_unsigned(pre + "batch", 1);
    r.T = kv.get_unsigned(pre + "T", default_T);
    r.average_iterates = kv.get_bool(pre + "average", false);
    r.alpha = kv.get_real(pre + "alpha", 0.4);
    const std::string abar = kv.get_string(pre + "abar", "norm");
    if (abar == "norm") r.abar_mode = AbarMode::norm;
    else if (abar == "squared") r.abar_mode = AbarMode::squared;
    else throw Fault("unknown abar mode '" + abar + "'");
    r.theta1 = kv.get_real(pre + "theta1");
    r.theta2 = kv.get_real(pre + "theta2");
    r.L = kv.get_real(pre + "L");
    cfg.arms.push_back(std::move(arm));
  }
  return cfg;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Fault("cannot read config '" + path.string() + "'");
  return experiment_from(KeyValueConfig::parse(in));
}

/// Problem instance for `repeat` (the same instance for every repeat unless
/// resampling is requested).
inline std::unique_ptr<FiniteSumProblem> make_problem(const ProblemSpec& spec, std::size_t repeat = 0) {
  DenseDataset data;
  switch (spec.kind) {
    case ProblemKind::context_shift: {
      ContextShiftSpec s = spec.context;
      if (spec.resample_per_repeat) s.seed = derive_seed(s.seed, 0, repeat);
      data = gen_context_shift(s).data;
      break;
    }
    case ProblemKind::concept_shift: {
      ConceptShiftSpec s = spec.concept_;
      if (spec.resample_per_repeat) s.seed = derive_seed(s.seed, 0, repeat);
      data = gen_concept_shift(s).data;
      break;
    }
    case ProblemKind::libsvm: {
      std::ifstream in(spec.path);
      if (!in) throw Fault("cannot read dataset '" + spec.path + "'");
      data = parse_libsvm(in, spec.dim_hint);
      break;
    }
  }
  if (spec.loss == Loss::logistic) return std::make_unique<LogisticProblem>(std::move(data), spec.ridge);
  return std::make_unique<LeastSquaresProblem>(std::move(data));
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  return detail::format_real(v);
}

inline std::string trace_header(const MetricToggles& m) {
  std::string h = "run,iter,subopt,v_eff,index,prob,refresh,nanos";
  if (m.v_sampling) h += ",v";
  if (m.D) h += ",D";
  if (m.psi) h += ",psi";
  return h;
}

inline std::string trace_line(const std::string& run_id, const IterationTrace& row, const MetricToggles& m) {
  std::string s = run_id + "," + std::to_string(row.iter) + "," + format_number(row.subopt) + "," +
                  format_number(row.v_eff) + "," + std::to_string(row.index) + "," + format_number(row.prob) +
                  "," + (row.refresh ? "1" : "0") + "," + std::to_string(row.nanos);
  if (m.v_sampling) s += "," + format_number(row.v_sampling);
  if (m.D) s += "," + format_number(row.dist_D);
  if (m.psi) s += "," + format_number(row.psi);
  return s;
}

inline std::string run_id(const std::string& arm, std::size_t repeat) {
  return arm + ":" + std::to_string(repeat);
}

inline std::filesystem::path trace_path(const std::filesystem::path& dir, const std::string& arm,
                                        std::size_t repeat) {
  return dir / (arm + "_r" + std::to_string(repeat) + ".csv");
}

struct SummaryRow {
  std::string arm;
  std::size_t iter = 0;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t repeats = 0;
};

/// Mean and sample standard deviation (R - 1 denominator; 0 when R = 1).
inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

struct ExperimentResult {
  std::vector<SummaryRow> summary;
  std::filesystem::path output_dir;
  /// Per arm and repeat, the final recorded suboptimality.
  std::vector<std::vector<double>> final_subopt;
};

struct ExperimentOptions {
  std::filesystem::path output_dir;
  std::size_t threads = 1;
  bool write_files = true;
};

/// Seeds: repeat r of arm a runs with derive_seed(seed, a, r).
inline RunConfig seeded(const RunConfig& base, std::uint64_t master, std::size_t arm, std::size_t repeat) {
  RunConfig r = base;
  r.seed = derive_seed(master, arm, repeat);
  return r;
}

namespace detail {

// Runs job(k) for k in [0, count) on up to `threads` workers. The exception of
// the lowest-numbered failing job is rethrown.
template <typename Job>
void parallel_for(std::size_t count, std::size_t threads, Job&& job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        job(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, count));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

class ProblemCache {
 public:
  ProblemCache(const ProblemSpec& spec, std::size_t repeats) : spec_(spec) {
    const std::size_t count = spec.resample_per_repeat ? repeats : 1;
    for (std::size_t r = 0; r < count; ++r) {
      auto problem = make_problem(spec, r);
      minimizers_.push_back(problem->exact_minimizer());
      problems_.push_back(std::move(problem));
    }
  }
  const FiniteSumProblem& problem(std::size_t repeat) const { return *problems_[slot(repeat)]; }
  const Minimizer& minimizer(std::size_t repeat) const { return minimizers_[slot(repeat)]; }

 private:
  std::size_t slot(std::size_t repeat) const { return spec_.resample_per_repeat ? repeat : 0; }
  ProblemSpec spec_;
  std::vector<std::unique_ptr<FiniteSumProblem>> problems_;
  std::vector<Minimizer> minimizers_;
};

}  // namespace detail

/// Runs every (arm, repeat), writes `<arm>_r<repeat>.csv` traces and
/// `summary.csv` (mean and sd of suboptimality per recorded iteration).
/// Failures name the run id `<arm>:<repeat>`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentOptions& opts = {}) {
  if (cfg.arms.empty()) throw Fault("experiment has no arms");
  const std::filesystem::path dir = opts.output_dir;
  if (opts.write_files) std::filesystem::create_directories(dir);

  const detail::ProblemCache problems(cfg.problem, cfg.repeats);
  const std::size_t jobs = cfg.arms.size() * cfg.repeats;
  std::vector<std::vector<IterationTrace>> traces(jobs);

  detail::parallel_for(jobs, opts.threads, [&](std::size_t k) {
    const std::size_t a = k / cfg.repeats;
    const std::size_t r = k % cfg.repeats;
    const ArmConfig& arm = cfg.arms[a];
    const std::string id = run_id(arm.name, r);
    RunOptions ro;
    ro.record_every = cfg.record_every;
    ro.record_v_eff = cfg.metrics.v_eff;
    ro.record_v_sampling = cfg.metrics.v_sampling;
    ro.record_D = cfg.metrics.D;
    ro.record_psi = cfg.metrics.psi;
    ro.record_timing = cfg.record_timing;
    ro.optimal_value = problems.minimizer(r).value;
    ro.reference = &problems.minimizer(r);
    try {
      traces[k] = run(seeded(arm.run, cfg.seed, a, r), problems.problem(r), ro).trace;
    } catch (const std::exception& e) {
      throw Fault("run " + id + " failed: " + e.what());
    }
    if (opts.write_files) {
      std::ofstream out(trace_path(dir, arm.name, r), std::ios::binary);
      if (!out) throw Fault("run " + id + ": cannot write trace file");
      out << trace_header(cfg.metrics) << '\n';
      for (const auto& row : traces[k]) out << trace_line(id, row, cfg.metrics) << '\n';
    }
  });

  ExperimentResult result;
  result.output_dir = dir;
  for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
    const auto& first = traces[a * cfg.repeats];
    std::vector<double> finals;
    for (std::size_t r = 0; r < cfg.repeats; ++r) finals.push_back(traces[a * cfg.repeats + r].back().subopt);
    result.final_subopt.push_back(std::move(finals));
    for (std::size_t row = 0; row < first.size(); ++row) {
      std::vector<double> values;
      for (std::size_t r = 0; r < cfg.repeats; ++r) values.push_back(traces[a * cfg.repeats + r][row].subopt);
      const auto [mean, sd] = mean_sd(values);
      result.summary.push_back({cfg.arms[a].name, first[row].iter, mean, sd, cfg.repeats});
    }
  }

  if (opts.write_files) {
    std::ofstream out(dir / "summary.csv", std::ios::binary);
    if (!out) throw Fault("cannot write summary.csv");
    out << "arm,iter,mean_subopt,sd_subopt,repeats\n";
    for (const auto& s : result.summary)
      out << s.arm << ',' << s.iter << ',' << format_number(s.mean) << ',' << format_number(s.sd) << ','
          << s.repeats << '\n';
  }
  return result;
}

// ---------------------------------------------------------------------------
// Learning-rate tuning

struct TuneEntry {
  double eta = 0.0;
  double mean_final_loss = 0.0;
  bool diverged = false;
};

struct TuneResult {
  std::string arm;
  double best_eta = 0.0;
  double best_loss = 0.0;
  std::vector<TuneEntry> table;
};

/// Picks the rate with the lowest mean final objective F(x^T) across
/// repeats. Diverged rates are skipped; ties go to the smaller rate.
inline TuneResult tune_learning_rate(const ExperimentConfig& cfg, std::size_t arm_index,
                                     const std::vector<double>& grid, std::size_t threads = 1) {
  if (grid.empty()) throw Fault("tuning grid is empty");
  if (arm_index >= cfg.arms.size()) throw Fault("arm index out of range");
  const ArmConfig& arm = cfg.arms[arm_index];
  std::vector<double> rates = grid;
  std::sort(rates.begin(), rates.end());

  const detail::ProblemCache problems(cfg.problem, cfg.repeats);
  const std::size_t jobs = rates.size() * cfg.repeats;
  std::vector<double> finals(jobs, std::numeric_limits<double>::quiet_NaN());
  detail::parallel_for(jobs, threads, [&](std::size_t k) {
    const std::size_t g = k / cfg.repeats;
    const std::size_t r = k % cfg.repeats;
    RunConfig rc = seeded(arm.run, cfg.seed, arm_index, r);
    rc.eta = rates[g];
    RunOptions ro;
    ro.record_every = std::max<std::size_t>(rc.T, 1);
    ro.record_v_eff = false;
    try {
      finals[k] = run(rc, problems.problem(r), ro).trace.back().subopt;
    } catch (const DivergenceError&) {
      // left as NaN
    }
  });

  TuneResult result;
  result.arm = arm.name;
  bool found = false;
  for (std::size_t g = 0; g < rates.size(); ++g) {
    TuneEntry entry{rates[g], 0.0, false};
    std::vector<double> values(finals.begin() + static_cast<std::ptrdiff_t>(g * cfg.repeats),
                               finals.begin() + static_cast<std::ptrdiff_t>((g + 1) * cfg.repeats));
    if (std::any_of(values.begin(), values.end(), [](double v) { return !std::isfinite(v); })) {
      entry.diverged = true;
    } else {
      entry.mean_final_loss = mean_sd(values).first;
      if (!found || entry.mean_final_loss < result.best_loss) {
        result.best_eta = entry.eta;
        result.best_loss = entry.mean_final_loss;
        found = true;
      }
    }
    result.table.push_back(entry);
  }
  if (!found) throw Fault("every learning rate diverged for arm '" + arm.name + "'");
  return result;
}

}  // namespace adasamp
