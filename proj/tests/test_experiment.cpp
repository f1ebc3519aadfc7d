#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "adasamp/adasamp.hpp"

using namespace adasamp;
namespace fs = std::filesystem;

namespace {

ExperimentConfig config(const std::string& text) {
  std::istringstream in(text);
  return experiment_from(KeyValueConfig::parse(in));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("adasamp_test_" + name)) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

const char* kSmall = R"(
problem.kind = context_shift
problem.n = 20
problem.d = 3
problem.seed = 2
experiment.seed = 4
experiment.repeats = 3
experiment.T = 50
experiment.record_every = 7
arm.u.sampler = uniform
arm.u.eta = 0.002
arm.a.sampler = adaosmd
arm.a.eta = 0.002
)";

}  // namespace

TEST(Config, ParsesKeysCommentsAndOrder) {
  std::istringstream in("# header\nb = 2\n a.x = hello world  # trailing\n\nb = 3\n");
  const auto kv = KeyValueConfig::parse(in);
  EXPECT_EQ(kv.keys(), (std::vector<std::string>{"b", "a.x"}));
  EXPECT_EQ(kv.require("a.x"), "hello world");
  EXPECT_EQ(kv.get_real("b", 0.0), 3.0);
  EXPECT_THROW(kv.require("missing"), Fault);
  std::istringstream bad("no equals sign\n");
  EXPECT_THROW(KeyValueConfig::parse(bad), Fault);
}

TEST(Config, ExperimentFields) {
  const auto cfg = config(R"(
problem.kind = concept_shift
problem.n = 60
problem.nu = 0.5
experiment.repeats = 4
experiment.metrics = subopt, v, D
tune.grid = linspace(0.1, 0.3, 3)
arm.kat.algorithm = lkatyusha
arm.kat.sampler = importance
arm.kat.theta1 = 0.2
arm.svrg.eta = 0.3
arm.svrg.batch = 5
arm.svrg.sampler = adaosmd
arm.svrg.abar = squared
)");
  EXPECT_EQ(cfg.problem.kind, ProblemKind::concept_shift);
  EXPECT_EQ(cfg.problem.concept_.n, 60u);
  EXPECT_EQ(cfg.problem.concept_.d, 30u);
  EXPECT_EQ(cfg.problem.concept_.nu, 0.5);
  EXPECT_EQ(cfg.repeats, 4u);
  EXPECT_FALSE(cfg.metrics.v_eff);
  EXPECT_TRUE(cfg.metrics.v_sampling);
  EXPECT_TRUE(cfg.metrics.D);
  ASSERT_EQ(cfg.tune_grid.size(), 3u);
  EXPECT_NEAR(cfg.tune_grid[1], 0.2, 1e-15);
  ASSERT_EQ(cfg.arms.size(), 2u);
  EXPECT_EQ(cfg.arms[0].name, "kat");
  EXPECT_EQ(cfg.arms[0].run.algorithm, Algorithm::lkatyusha);
  EXPECT_EQ(cfg.arms[0].run.theta1, 0.2);
  EXPECT_EQ(cfg.arms[1].run.batch, 5u);
  EXPECT_EQ(cfg.arms[1].run.abar_mode, AbarMode::squared);
  EXPECT_EQ(cfg.arms[1].run.T, 1000u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config("problem.kind = nope\narm.a.eta = 1\n"), Fault);
  EXPECT_THROW(config("experiment.metrics = subopt, bogus\narm.a.eta = 1\n"), Fault);
  EXPECT_THROW(config("arm.a.speed = 1\n"), Fault);
  EXPECT_THROW(config("arm.a b.eta = 1\n"), Fault);
  EXPECT_THROW(config("experiment.repeats = 0\narm.a.eta = 1\n"), Fault);
  EXPECT_THROW(config("experiment.repeats = -3\narm.a.eta = 1\n"), Fault);
  EXPECT_THROW(config("problem.n = 10\n"), Fault);
  EXPECT_THROW(parse_rate_grid("linspace(1, 2)"), Fault);
}

TEST(Csv, NumberFormatting) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(trace_header({}), "run,iter,subopt,v_eff,index,prob,refresh,nanos");
  EXPECT_EQ(trace_header({true, true, true, true}), "run,iter,subopt,v_eff,index,prob,refresh,nanos,v,D,psi");
}

TEST(Experiment, ZeroIterationsWritesHeaderAndStartRow) {
  TempDir dir("t0");
  auto cfg = config(std::string(kSmall) + "experiment.T = 0\n");
  run_experiment(cfg, {dir.path(), 1, true});
  const auto rows = lines(slurp(dir.path() / "u_r0.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "run,iter,subopt,v_eff,index,prob,refresh,nanos");
  EXPECT_EQ(rows[1].rfind("u:0,0,", 0), 0u);
}

TEST(Experiment, RowCountFollowsRecordEvery) {
  TempDir dir("rows");
  run_experiment(config(kSmall), {dir.path(), 1, true});
  // ceil(50 / 7) + 1 = 9 rows plus the header.
  EXPECT_EQ(lines(slurp(dir.path() / "a_r2.csv")).size(), 10u);
}

TEST(Experiment, RerunsAreByteIdentical) {
  TempDir a("det_a"), b("det_b");
  const auto cfg = config(std::string(kSmall) + "experiment.metrics = subopt, v_eff, v, D\n");
  run_experiment(cfg, {a.path(), 1, true});
  run_experiment(cfg, {b.path(), 2, true});
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a.path())) {
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / e.path().filename())) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 7u);
}

TEST(Experiment, SummaryMatchesTraces) {
  TempDir dir("summary");
  const auto cfg = config(kSmall);
  const auto res = run_experiment(cfg, {dir.path(), 1, true});
  for (const auto& row : res.summary) {
    std::vector<double> values;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      for (const auto& line : lines(slurp(trace_path(dir.path(), row.arm, r)))) {
        std::istringstream fields(line);
        std::string id, iter, subopt;
        std::getline(fields, id, ',');
        std::getline(fields, iter, ',');
        std::getline(fields, subopt, ',');
        if (iter == std::to_string(row.iter)) values.push_back(std::stod(subopt));
      }
    }
    ASSERT_EQ(values.size(), cfg.repeats);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    EXPECT_NEAR(row.mean, mean, 1e-12 * std::max(1.0, std::abs(mean)));
    EXPECT_NEAR(row.sd, sd, 1e-12 * std::max(1.0, sd));
  }
  EXPECT_EQ(lines(slurp(dir.path() / "summary.csv")).front(), "arm,iter,mean_subopt,sd_subopt,repeats");
}

TEST(Experiment, LibsvmLogisticProblem) {
  const auto cfg = config(std::string("problem.kind = libsvm\nproblem.path = ") + ADASAMP_FIXTURE_DIR +
                          "/w8a_excerpt.txt\nproblem.dim = 300\nproblem.ridge = 0.01\n"
                          "experiment.T = 200\nexperiment.record_every = 100\narm.k.algorithm = lkatyusha\n"
                          "arm.k.sampler = importance\n");
  const auto p = make_problem(cfg.problem);
  EXPECT_EQ(p->n(), 50u);
  EXPECT_EQ(p->dim(), 300u);
  const auto res = run_experiment(cfg, {"", 1, false});
  EXPECT_LT(res.final_subopt[0][0], res.summary.front().mean);
}

namespace {

// Single component f(x) = 1/2 (2 - 2x)^2 from x = 0: one GD step lands on the
// minimizer exactly when eta = 1/a^2 = 0.25.
ExperimentConfig one_step_config(const fs::path& data) {
  std::ofstream(data) << "2 1:2\n";
  return config("problem.kind = libsvm\nproblem.loss = least_squares\nproblem.path = " + data.string() +
                "\nexperiment.T = 1\narm.g.algorithm = lsvrg\n");
}

}  // namespace

TEST(Tune, PicksAnalyticArgmin) {
  TempDir dir("tune");
  fs::create_directories(dir.path());
  const auto cfg = one_step_config(dir.path() / "one.txt");
  const auto res = tune_learning_rate(cfg, 0, {0.4, 0.1, 0.25});
  EXPECT_EQ(res.best_eta, 0.25);
  EXPECT_NEAR(res.best_loss, 0.0, 1e-20);
  ASSERT_EQ(res.table.size(), 3u);
  EXPECT_EQ(res.table[0].eta, 0.1);
  // 0.1 and 0.4 tie at 1/2 * 4 * 0.36; the smaller rate is listed first.
  EXPECT_NEAR(res.table[0].mean_final_loss, res.table[2].mean_final_loss, 1e-12);
}

TEST(Tune, SingletonAndZeroRates) {
  TempDir dir("tune2");
  fs::create_directories(dir.path());
  const auto cfg = one_step_config(dir.path() / "one.txt");
  EXPECT_EQ(tune_learning_rate(cfg, 0, {0.7}).best_eta, 0.7);
  EXPECT_EQ(tune_learning_rate(cfg, 0, {0.0, 0.01}).best_eta, 0.01);
  EXPECT_THROW(tune_learning_rate(cfg, 0, {}), Fault);
  EXPECT_THROW(tune_learning_rate(cfg, 3, {0.1}), Fault);
}

TEST(Tune, AllDivergedFaults) {
  const auto cfg = config(std::string(kSmall) + "experiment.T = 400\nexperiment.repeats = 1\n");
  EXPECT_THROW(tune_learning_rate(cfg, 0, {1e6}), Fault);
}

TEST(Verify, SuiteDispatch) {
  EXPECT_EQ(verify::run_suite("all", 3).size(), verify::suite_names().size());
  for (const auto& r : verify::run_suite("all", 3)) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
  EXPECT_THROW(verify::run_suite("nope", 3), Fault);
}

TEST(Seeding, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
  EXPECT_EQ(derive_seed(5, 2, 3), derive_seed(5, 2, 3));
}
