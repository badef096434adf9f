#include <catch_amalgamated.hpp>

#include "ratioprox/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace ratioprox;
using Catch::Approx;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ratioprox_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTiny = R"(
# tiny grid
kind = cs-noiseless
m = 16
n = 64
E = 1
D = 1
s = 2, 3
init = bp
solvers = l1, apg, admm   # three rows per setting
trials = 3
base_seed = 7
)";

ExperimentSpec tiny_spec(const std::string& out) {
  auto kv = parse_key_values(std::string(kTiny) + "output = " + out + "\n");
  return spec_from_key_values(kv);
}

}  // namespace

TEST_CASE("key = value parsing", "[harness][config]") {
  const auto kv = parse_key_values("a = 1\n# comment\n\n b=two words  # trailing\n");
  CHECK(kv.values.at("a") == "1");
  CHECK(kv.values.at("b") == "two words");
  CHECK(kv.line_of.at("b") == 4);
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_key_values("just words\n"), InvalidConfig);
}

TEST_CASE("config validation reports every problem", "[harness][config]") {
  const auto kv = parse_key_values(
      "kind = cs-noiseless\nm = 2000\nn = 100\ns = 0\nsolvers = apg, magic\n"
      "colour = blue\noutput = x.csv\n");
  try {
    spec_from_key_values(kv);
    FAIL("expected InvalidConfig");
  } catch (const InvalidConfig& e) {
    const std::string msg = e.what();
    CHECK(msg.find("colour") != std::string::npos);
  }
  const auto kv2 = parse_key_values(
      "kind = cs-noiseless\nm = 2000\nn = 100\ns = 0\nsolvers = apg, magic\noutput = x.csv\n");
  try {
    spec_from_key_values(kv2);
    FAIL("expected InvalidConfig");
  } catch (const InvalidConfig& e) {
    const std::string msg = e.what();
    CHECK(msg.find("m = 2000") != std::string::npos);
    CHECK(msg.find("s = 0") != std::string::npos);
    CHECK(msg.find("magic") != std::string::npos);
  }
  CHECK_THROWS_AS(spec_from_key_values(parse_key_values("kind = nope\noutput = x\n")),
                  InvalidConfig);
  CHECK_THROWS_AS(spec_from_key_values(parse_key_values("kind = cs-noiseless\nn = abc\noutput = x\nsolvers = apg\n")),
                  InvalidConfig);
}

TEST_CASE("shipped configs parse", "[harness][config]") {
  const std::filesystem::path dir = RATIOPROX_CONFIG_DIR;
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".cfg") continue;
    INFO(entry.path().string());
    CHECK_NOTHROW(load_experiment(entry.path().string()));
    ++count;
  }
  CHECK(count >= 5);
  const auto g = load_experiment((dir / "noisy_gaussian_mse.cfg").string());
  CHECK(g.solver("apg")->lambda == 1e-7);
  CHECK(g.solver("admm")->lambda == 1e-5);
  const auto d = load_experiment((dir / "noisy_dct_relerr.cfg").string());
  CHECK(d.solver("apg")->lambda == 0.1);
  CHECK(d.solver("admm")->lambda == 0.01);
  CHECK(load_experiment((dir / "noiseless_dct_accuracy.cfg").string()).solver("apg")->lambda == 1e-4);
}

TEST_CASE("tiny experiment writes the expected CSV", "[harness][run]") {
  const std::string out = temp_path("tiny.csv");
  const auto spec = tiny_spec(out);
  const auto res = run_experiment(spec);
  CHECK(res.rows.size() == 2 * 3);
  CHECK(res.records.size() == 2 * 3 * 3);
  const std::string text = slurp(out);
  std::istringstream lines(text);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "kind,E,D,m,n,s,noise,solver,lambda,trials,success,success_rate,mean_rel_error,"
        "mean_missing,mean_misidentified,mean_mse,mean_iterations");
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  CHECK(text.find('\r') == std::string::npos);
  for (const auto& row : res.rows) CHECK(row.num("trials") == 3);
  CHECK(std::filesystem::exists(out + ".timing.csv"));
  std::filesystem::remove(out);
  std::filesystem::remove(out + ".timing.csv");
}

TEST_CASE("results do not depend on the worker count", "[harness][determinism]") {
  const std::string a = temp_path("det_a.csv"), b = temp_path("det_b.csv");
  setenv("RATIOPROX_THREADS", "1", 1);
  run_experiment(tiny_spec(a));
  setenv("RATIOPROX_THREADS", "3", 1);
  run_experiment(tiny_spec(b));
  unsetenv("RATIOPROX_THREADS");
  CHECK(slurp(a) == slurp(b));
  run_experiment(tiny_spec(b));
  CHECK(slurp(a) == slurp(b));
  for (const auto& p : {a, b}) {
    std::filesystem::remove(p);
    std::filesystem::remove(p + ".timing.csv");
  }
}

TEST_CASE("aggregates are invariant to trial order", "[harness][property]") {
  const auto spec = tiny_spec(temp_path("unused.csv"));
  const auto settings = cs_settings(spec);
  std::vector<TrialRecord> records;
  for (std::size_t s = 0; s < settings.size(); ++s)
    for (int t = 0; t < spec.trials; ++t) {
      auto r = run_cs_trial(spec, settings[s], s, t);
      records.insert(records.end(), r.begin(), r.end());
    }
  const auto base = aggregate_cs(spec, settings, records);
  std::mt19937 gen(11);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(records.begin(), records.end(), gen);
    const auto again = aggregate_cs(spec, settings, records);
    REQUIRE(again.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
      for (const char* col : {"mean_rel_error", "mean_missing", "mean_misidentified",
                              "mean_mse", "mean_iterations", "success_rate"}) {
        if (base[i].str(col).empty())
          CHECK(again[i].str(col).empty());
        else
          CHECK(std::abs(again[i].num(col) - base[i].num(col)) <= 1e-12);
      }
  }
}

TEST_CASE("column set depends only on the kind", "[harness][schema]") {
  CHECK(cs_columns(ExperimentKind::cs_noiseless) == cs_columns(ExperimentKind::cs_noisy_dct));
  CHECK(cs_columns(ExperimentKind::cs_noisy_gaussian)[1] == "r");
  const auto spec = tiny_spec(temp_path("unused.csv"));
  const auto settings = cs_settings(spec);
  const auto recs = run_cs_trial(spec, settings[0], 0, 0);
  for (const auto& row : aggregate_cs(spec, settings, recs))
    CHECK(row.columns == cs_columns(spec.kind));
}

TEST_CASE("noisy Gaussian trial produces oracle and solver rows", "[harness][run]") {
  auto kv = parse_key_values(
      "kind = cs-noisy-gaussian\nm = 40\nn = 80\ns = 6\nnoise = 0.1\n"
      "solvers = oracle, l1, apg\nlambda.apg = 1e-7\ntrials = 2\noutput = " +
      temp_path("gauss.csv") + "\n");
  const auto spec = spec_from_key_values(kv);
  CHECK(spec.resolved_init() == "bpdn");
  const auto res = run_cs_experiment(spec);
  REQUIRE(res.rows.size() == 3);
  CHECK(res.rows[0].str("solver") == "oracle");
  CHECK(res.rows[0].num("mean_mse") > 0.0);
  CHECK(res.rows[0].str("mean_rel_error").empty());
  CHECK(res.rows[1].str("lambda").empty());
  CHECK(res.rows[2].num("lambda") == 1e-7);
  CHECK(res.rows[2].num("mean_mse") < 10.0 * res.rows[0].num("mean_mse"));
}

TEST_CASE("trace plot data", "[harness][plot]") {
  SolverTrace tr;
  tr.iterations = 3;
  tr.objective = {3.0, 2.0, 1.5};
  tr.rel_error_to_truth = {0.5, 0.25, 0.125};
  const std::string path = temp_path("trace.dat");
  emit_trace_plot_data(tr, path);
  const std::string text = slurp(path);
  CHECK(text == "# objective\n1 3\n2 2\n3 1.5\n\n\n# relative_error\n1 0.5\n2 0.25\n3 0.125\n");
  emit_trace_plot_data(tr, path);
  CHECK(slurp(path) == text);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(trace_plot_text(SolverTrace{}), InvalidInput);
}

TEST_CASE("APG objective stays below FBS after a burn-in", "[harness][plot]") {
  const Matrix A = make_dct_matrix({64, 1024, 1.0, 5});
  const Vector x = gen_sparse_signal({1024, 5, 3.0, 2, 6});
  const CsProblem prob{A, A * x, 1e-4, PenaltyOrder{2}, x};
  const Vector x0 = default_initial_point(prob);
  const auto f = solve_fbs(prob, {}, x0), a = solve_apg(prob, {}, x0);
  const std::size_t burn = 10;
  const std::size_t len = std::max(f.trace.objective.size(), a.trace.objective.size());
  auto at = [](const std::vector<double>& v, std::size_t k) { return v[std::min(k, v.size() - 1)]; };
  for (std::size_t k = burn; k < len; ++k)
    CHECK(at(a.trace.objective, k) <= at(f.trace.objective, k) + 1e-12);
}

TEST_CASE("unwritable output is an I/O error", "[harness][io]") {
  CHECK_THROWS_AS(write_file_atomic("/nonexistent_dir/x.csv", "a"), IoError);
  auto spec = tiny_spec("/nonexistent_dir/out.csv");
  CHECK_THROWS_AS(run_experiment(spec), IoError);
}

TEST_CASE("image and prox self-test experiments", "[harness][run]") {
  auto kv = parse_key_values(
      "kind = image-restore\nsize = 32\nblur = average:3\nnoise = 0.42\n"
      "solvers = h2-admm, tv-papc\nrho.h2-admm = 1e-2\nlambda.tv-papc = 1e-2\n"
      "max_iters = 200\noutput = " + temp_path("img.csv") + "\n");
  const auto spec = spec_from_key_values(kv);
  const auto res = run_image_experiment(spec);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].str("method") == "h2-admm");
  CHECK(res.rows[0].num("mean_psnr") > 20.0);
  CHECK(res.rows[1].num("mean_psnr") > 20.0);

  ExperimentSpec ps;
  ps.kind = ExperimentKind::prox_selftest;
  ps.samples = 3;
  ps.output_path = temp_path("prox.csv");
  const auto pr = run_prox_selftest(ps);
  CHECK(pr.rows.size() == 18);
  for (const auto& row : pr.rows) CHECK(row.num("failures") == 0);
  CHECK(prox_threshold_check(200, 3).failures == 0);
}
