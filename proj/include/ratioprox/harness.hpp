#pragma once

// Batch experiment driver: flat key = value configs, seeded trials run on a
// worker pool, per-setting aggregates written as CSV, plot data for traces.

#include "ratioprox/imaging.hpp"
#include "ratioprox/metrics.hpp"
#include "ratioprox/prox.hpp"
#include "ratioprox/prox_oracle.hpp"
#include "ratioprox/rng.hpp"
#include "ratioprox/sensing.hpp"
#include "ratioprox/solvers.hpp"
#include "ratioprox/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace ratioprox {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config text

struct KeyValues {
  std::map<std::string, std::string> values;
  std::map<std::string, int> line_of;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// `key = value` per line; `#` starts a comment. Duplicate keys are errors.
inline KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> errors;
  for (int ln = 1; std::getline(in, line); ++ln) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(ln) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(ln) + ": empty key");
      continue;
    }
    if (kv.values.count(key)) {
      errors.push_back("line " + std::to_string(ln) + ": duplicate key '" + key + "'");
      continue;
    }
    kv.values[key] = val;
    kv.line_of[key] = ln;
  }
  if (!errors.empty()) {
    std::string msg = "config errors:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw InvalidConfig(msg);
  }
  return kv;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

// ---------------------------------------------------------------------------
// Experiment spec

enum class ExperimentKind { cs_noiseless, cs_noisy_dct, cs_noisy_gaussian, image_restore, prox_selftest };

inline std::string kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::cs_noiseless: return "cs-noiseless";
    case ExperimentKind::cs_noisy_dct: return "cs-noisy-dct";
    case ExperimentKind::cs_noisy_gaussian: return "cs-noisy-gaussian";
    case ExperimentKind::image_restore: return "image-restore";
    case ExperimentKind::prox_selftest: return "prox-selftest";
  }
  return "?";
}

inline bool is_cs(ExperimentKind k) {
  return k == ExperimentKind::cs_noiseless || k == ExperimentKind::cs_noisy_dct ||
         k == ExperimentKind::cs_noisy_gaussian;
}

struct SolverSpec {
  std::string name;  // fbs, apg, admm, l1, oracle, h2-admm, tv-papc
  double lambda = 1e-4;
  double rho = 1.0;  // admm penalty, h2-admm initial rho
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::cs_noiseless;
  int trials = 1;
  std::uint64_t base_seed = 0;
  std::string output_path;
  std::string trace_path;   // optional plot-data prefix, first setting / trial
  std::string trials_path;  // optional per-trial CSV

  // compressed sensing
  std::vector<Index> m_list{64};
  Index n = 1024;
  std::vector<double> E_list{1.0};
  std::vector<double> r_list{0.0};
  std::vector<double> D_list{0.0};
  std::vector<Index> s_list{5};
  Index min_separation = 0;  // 0: ceil(2E) for DCT, 1 for Gaussian
  double noise = 0.0;
  std::string init = "auto";  // auto, bp, lasso, bpdn
  PenaltyOrder p{2};
  int max_iters_factor = 5;   // max_iters = factor * n
  double rel_tol = 1e-6;
  std::vector<SolverSpec> solvers;

  // image restoration
  std::string image = "texture";
  Index image_size = 128;
  std::string blur = "average:5";
  double growth = 1.1;
  int image_max_iters = 2000;
  double image_rel_tol = 5e-7;
  double psnr_drop_db = 3.0;

  // prox self-test
  int samples = 200;

  std::string resolved_init() const {
    if (init != "auto") return init;
    return kind == ExperimentKind::cs_noiseless ? "bp" : "bpdn";
  }

  Index separation_for(double E) const {
    if (min_separation > 0) return min_separation;
    return kind == ExperimentKind::cs_noisy_gaussian ? 1 : dct_min_separation(E);
  }

  const SolverSpec* solver(const std::string& name) const {
    for (const auto& s : solvers)
      if (s.name == name) return &s;
    return nullptr;
  }

  /// Every problem, not just the first.
  std::vector<std::string> validation_errors() const {
    std::vector<std::string> err;
    if (trials < 1) err.push_back("trials must be >= 1");
    if (is_cs(kind)) {
      if (n < 1) err.push_back("n must be >= 1");
      for (Index m : m_list)
        if (m < 1 || m > n) err.push_back("m = " + std::to_string(m) + " must lie in [1, n]");
      for (Index s : s_list)
        if (s < 1 || s > n) err.push_back("s = " + std::to_string(s) + " must lie in [1, n]");
      for (double D : D_list)
        if (D < 0.0) err.push_back("D must be >= 0");
      if (kind == ExperimentKind::cs_noisy_gaussian) {
        for (double r : r_list)
          if (r < 0.0 || r >= 1.0) err.push_back("r must lie in [0, 1)");
      } else {
        for (double E : E_list)
          if (!(E > 0.0)) err.push_back("E must be > 0");
      }
      if (kind == ExperimentKind::cs_noiseless && noise != 0.0)
        err.push_back("cs-noiseless requires noise = 0");
      if (kind != ExperimentKind::cs_noiseless && !(noise > 0.0))
        err.push_back("noisy experiments need noise > 0");
      const std::string in = resolved_init();
      if (in != "bp" && in != "lasso" && in != "bpdn")
        err.push_back("init must be auto, bp, lasso or bpdn");
      if (in == "bpdn" && kind == ExperimentKind::cs_noiseless)
        err.push_back("init = bpdn needs noisy data");
      if (max_iters_factor < 1) err.push_back("max_iters_factor must be >= 1");
      if (!(rel_tol > 0.0)) err.push_back("rel_tol must be > 0");
      if (solvers.empty()) err.push_back("solvers list is empty");
      for (const auto& s : solvers) {
        static const std::set<std::string> known{"fbs", "apg", "admm", "l1", "oracle"};
        if (!known.count(s.name)) err.push_back("unknown solver '" + s.name + "'");
        if (!(s.lambda > 0.0)) err.push_back("lambda." + s.name + " must be > 0");
        if (!(s.rho > 0.0)) err.push_back("rho." + s.name + " must be > 0");
        if (s.name == "oracle" && kind == ExperimentKind::cs_noiseless)
          err.push_back("oracle rows need noisy data");
      }
      for (Index s : s_list)
        for (double E : E_list) {
          const Index d = separation_for(E);
          if ((s - 1) * d + 1 > n)
            err.push_back("cannot place s = " + std::to_string(s) + " entries " +
                          std::to_string(d) + " apart in n = " + std::to_string(n));
        }
    } else if (kind == ExperimentKind::image_restore) {
      if (image == "texture" && image_size < 8) err.push_back("size must be >= 8");
      try {
        parse_blur(blur);
      } catch (const std::exception& e) {
        err.push_back(e.what());
      }
      if (noise < 0.0) err.push_back("noise must be >= 0");
      if (!(growth > 1.0)) err.push_back("growth must be > 1");
      if (image_max_iters < 1) err.push_back("max_iters must be >= 1");
      if (solvers.empty()) err.push_back("solvers list is empty");
      for (const auto& s : solvers) {
        if (s.name != "h2-admm" && s.name != "tv-papc")
          err.push_back("unknown method '" + s.name + "'");
        if (!(s.lambda > 0.0)) err.push_back("lambda." + s.name + " must be > 0");
        if (!(s.rho > 0.0)) err.push_back("rho." + s.name + " must be > 0");
      }
    } else {
      if (samples < 1) err.push_back("samples must be >= 1");
    }
    if (output_path.empty()) err.push_back("output path is empty");
    return err;
  }

  void validate() const {
    const auto err = validation_errors();
    if (err.empty()) return;
    std::string msg = "invalid experiment:";
    for (const auto& e : err) msg += "\n  " + e;
    throw InvalidConfig(msg);
  }
};

namespace detail {

template <class T>
T parse_scalar(const std::string& key, const std::string& v, std::vector<std::string>& err) {
  std::istringstream in(v);
  T out{};
  const bool ok = static_cast<bool>(in >> out);
  if (ok) in >> std::ws;  // may set failbit at end of input
  if (!ok || !in.eof()) {
    err.push_back("key '" + key + "': cannot parse '" + v + "'");
    return T{};
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v,
                          std::vector<std::string>& err) {
  std::vector<T> out;
  std::stringstream ss(v);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = trim(tok);
    if (tok.empty()) {
      err.push_back("key '" + key + "': empty list entry");
      continue;
    }
    out.push_back(parse_scalar<T>(key, tok, err));
  }
  if (out.empty()) err.push_back("key '" + key + "': empty list");
  return out;
}

}  // namespace detail

/// Builds a spec from parsed keys. Unknown keys and bad values are collected
/// and reported together.
inline ExperimentSpec spec_from_key_values(const KeyValues& kv) {
  ExperimentSpec spec;
  std::vector<std::string> err;
  std::set<std::string> used;
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = kv.values.find(key);
    if (it == kv.values.end()) return nullptr;
    used.insert(key);
    return &it->second;
  };

  if (const auto* v = get("kind")) {
    static const std::map<std::string, ExperimentKind> kinds{
        {"cs-noiseless", ExperimentKind::cs_noiseless},
        {"cs-noisy-dct", ExperimentKind::cs_noisy_dct},
        {"cs-noisy-gaussian", ExperimentKind::cs_noisy_gaussian},
        {"image-restore", ExperimentKind::image_restore},
        {"prox-selftest", ExperimentKind::prox_selftest}};
    auto it = kinds.find(*v);
    if (it == kinds.end())
      err.push_back("unknown kind '" + *v + "'");
    else
      spec.kind = it->second;
  } else {
    err.push_back("missing key 'kind'");
  }

  using detail::parse_list;
  using detail::parse_scalar;
  if (const auto* v = get("trials")) spec.trials = parse_scalar<int>("trials", *v, err);
  if (const auto* v = get("base_seed")) spec.base_seed = parse_scalar<std::uint64_t>("base_seed", *v, err);
  if (const auto* v = get("output")) spec.output_path = *v;
  if (const auto* v = get("trace_output")) spec.trace_path = *v;
  if (const auto* v = get("trials_output")) spec.trials_path = *v;
  if (const auto* v = get("m")) spec.m_list = parse_list<Index>("m", *v, err);
  if (const auto* v = get("n")) spec.n = parse_scalar<Index>("n", *v, err);
  if (const auto* v = get("E")) spec.E_list = parse_list<double>("E", *v, err);
  if (const auto* v = get("r")) spec.r_list = parse_list<double>("r", *v, err);
  if (const auto* v = get("D")) spec.D_list = parse_list<double>("D", *v, err);
  if (const auto* v = get("s")) spec.s_list = parse_list<Index>("s", *v, err);
  if (const auto* v = get("min_separation")) spec.min_separation = parse_scalar<Index>("min_separation", *v, err);
  if (const auto* v = get("noise")) spec.noise = parse_scalar<double>("noise", *v, err);
  if (const auto* v = get("init")) spec.init = *v;
  if (const auto* v = get("p")) {
    const int p = parse_scalar<int>("p", *v, err);
    if (p == 1 || p == 2)
      spec.p = PenaltyOrder{p};
    else
      err.push_back("p must be 1 or 2");
  }
  if (const auto* v = get("max_iters_factor")) spec.max_iters_factor = parse_scalar<int>("max_iters_factor", *v, err);
  if (const auto* v = get("rel_tol")) spec.rel_tol = parse_scalar<double>("rel_tol", *v, err);
  if (const auto* v = get("image")) spec.image = *v;
  if (const auto* v = get("size")) spec.image_size = parse_scalar<Index>("size", *v, err);
  if (const auto* v = get("blur")) spec.blur = *v;
  if (const auto* v = get("growth")) spec.growth = parse_scalar<double>("growth", *v, err);
  if (const auto* v = get("max_iters")) spec.image_max_iters = parse_scalar<int>("max_iters", *v, err);
  if (const auto* v = get("image_rel_tol")) spec.image_rel_tol = parse_scalar<double>("image_rel_tol", *v, err);
  if (const auto* v = get("psnr_drop_db")) spec.psnr_drop_db = parse_scalar<double>("psnr_drop_db", *v, err);
  if (const auto* v = get("samples")) spec.samples = parse_scalar<int>("samples", *v, err);

  double lambda_default = spec.kind == ExperimentKind::image_restore ? 2e-2 : 1e-4;
  double rho_default = spec.kind == ExperimentKind::image_restore ? 1e-8 : 1.0;
  if (const auto* v = get("lambda")) lambda_default = parse_scalar<double>("lambda", *v, err);
  if (const auto* v = get("rho")) rho_default = parse_scalar<double>("rho", *v, err);
  if (const auto* v = get("solvers")) {
    std::stringstream ss(*v);
    for (std::string tok; std::getline(ss, tok, ',');) {
      tok = trim(tok);
      if (tok.empty()) continue;
      SolverSpec s{tok, lambda_default, rho_default};
      if (const auto* lv = get("lambda." + tok)) s.lambda = parse_scalar<double>("lambda." + tok, *lv, err);
      if (const auto* rv = get("rho." + tok)) s.rho = parse_scalar<double>("rho." + tok, *rv, err);
      spec.solvers.push_back(s);
    }
  }
  for (const auto& [key, val] : kv.values)
    if (!used.count(key)) {
      auto ln = kv.line_of.find(key);
      err.push_back("unknown key '" + key + "'" +
                    (ln != kv.line_of.end() ? " (line " + std::to_string(ln->second) + ")" : ""));
    }
  if (err.empty()) {
    const auto more = spec.validation_errors();
    err.insert(err.end(), more.begin(), more.end());
  }
  if (!err.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& e : err) msg += "\n  " + e;
    throw InvalidConfig(msg);
  }
  return spec;
}

inline ExperimentSpec load_experiment(const std::string& path) {
  return spec_from_key_values(load_key_values(path));
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  std::vector<std::string> columns;
  std::vector<std::string> cells;
  double wall_time = 0.0;  // seconds, mean per trial; kept out of the main CSV

  const std::string& str(const std::string& col) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == col) return cells[i];
    throw InvalidInput("no column '" + col + "'");
  }
  double num(const std::string& col) const { return std::stod(str(col)); }
};

struct TrialRecord {
  std::size_t setting = 0;
  int trial = 0;
  std::string solver;
  double lambda = 0.0;
  RecoveryMetrics metrics;
  int iterations = 0;
  double wall_time = 0.0;
};

struct CsSetting {
  double ensemble = 0.0;  // E or r
  double D = 0.0;
  Index m = 0;
  Index s = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<TrialRecord> records;  // sorted by (setting, trial, solver order)
  std::vector<CsSetting> settings;
};

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_text(const std::vector<ResultRow>& rows) {
  std::string out;
  if (rows.empty()) return out;
  for (std::size_t i = 0; i < rows[0].columns.size(); ++i)
    out += (i ? "," : "") + rows[0].columns[i];
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.cells.size(); ++i) out += (i ? "," : "") + r.cells[i];
    out += '\n';
  }
  return out;
}

/// Writes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path() && !fs::is_directory(target.parent_path()))
    throw IoError("output directory '" + target.parent_path().string() + "' does not exist");
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path + "'");
  }
}

/// Two blocks of "iteration value" lines, objective then relative error,
/// separated by a blank line.
inline std::string trace_plot_text(const SolverTrace& trace) {
  require(trace.iterations > 0 && !trace.objective.empty(), "trace is empty");
  std::string out = "# objective\n";
  for (std::size_t k = 0; k < trace.objective.size(); ++k)
    out += std::to_string(k + 1) + ' ' + format_number(trace.objective[k]) + '\n';
  out += "\n\n# relative_error\n";
  for (std::size_t k = 0; k < trace.rel_error_to_truth.size(); ++k)
    out += std::to_string(k + 1) + ' ' + format_number(trace.rel_error_to_truth[k]) + '\n';
  return out;
}

inline void emit_trace_plot_data(const SolverTrace& trace, const std::string& path) {
  write_file_atomic(path, trace_plot_text(trace));
}

inline int worker_count(std::size_t tasks) {
  int threads = int(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("RATIOPROX_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) threads = v;
  }
  return std::max(1, std::min<int>(threads, int(tasks)));
}

/// Runs fn(i) for i in [0, count) on a pool. The first exception is rethrown
/// after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int workers = worker_count(count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Compressed sensing experiments

namespace detail {

inline std::uint64_t stream_seed(std::uint64_t trial_seed, std::uint64_t salt) {
  return Rng::mix64(trial_seed ^ Rng::mix64(salt));
}

struct CsInstance {
  Matrix A;
  Vector x;
  Vector b;
  double sigma = 0.0;
};

inline CsInstance make_cs_instance(const ExperimentSpec& spec, const CsSetting& set,
                                   int trial) {
  const std::uint64_t seed = spec.base_seed + std::uint64_t(trial);
  CsInstance in;
  if (spec.kind == ExperimentKind::cs_noisy_gaussian)
    in.A = make_gaussian_matrix({set.m, spec.n, set.ensemble, stream_seed(seed, 1), true});
  else
    in.A = make_dct_matrix({set.m, spec.n, set.ensemble, stream_seed(seed, 1)});
  in.x = gen_sparse_signal(
      {spec.n, set.s, set.D, spec.separation_for(set.ensemble), stream_seed(seed, 2)});
  Rng noise(stream_seed(seed, 3));
  const auto obs = make_noisy_observation(in.A, in.x, spec.noise, noise);
  in.b = obs.b;
  in.sigma = obs.sigma;
  return in;
}

}  // namespace detail

inline std::vector<CsSetting> cs_settings(const ExperimentSpec& spec) {
  std::vector<CsSetting> out;
  const auto& ens = spec.kind == ExperimentKind::cs_noisy_gaussian ? spec.r_list : spec.E_list;
  for (double e : ens)
    for (double D : spec.D_list)
      for (Index m : spec.m_list)
        for (Index s : spec.s_list) out.push_back({e, D, m, s});
  return out;
}

/// One trial of one setting: every configured solver from a shared start.
inline std::vector<TrialRecord> run_cs_trial(const ExperimentSpec& spec,
                                             const CsSetting& set, std::size_t setting,
                                             int trial,
                                             std::vector<SolverTrace>* traces = nullptr) {
  const auto in = detail::make_cs_instance(spec, set, trial);
  SolverConfig cfg;
  cfg.max_iters = spec.max_iters_factor * int(spec.n);
  cfg.rel_tol = spec.rel_tol;
  cfg.spectral_norm = spectral_norm(in.A);

  const auto t0 = detail::Clock::now();
  Vector x_l1, x0;
  const std::string init = spec.resolved_init();
  if (init == "bp") {
    x_l1 = solve_basis_pursuit(in.A, in.b).x;
  } else if (init == "bpdn") {
    x_l1 = solve_bpdn(in.A, in.b, in.sigma, cfg).x;
  } else {
    const CsProblem tmp{in.A, in.b, 1e-4, spec.p, std::nullopt};
    x_l1 = default_initial_point(tmp, cfg);
  }
  x0 = spec.kind == ExperimentKind::cs_noiseless
           ? x_l1
           : noisy_initial_point(in.A, in.b, in.sigma, x_l1);
  const double init_time = detail::seconds_since(t0);

  std::vector<TrialRecord> out;
  for (const auto& s : spec.solvers) {
    TrialRecord r;
    r.setting = setting;
    r.trial = trial;
    r.solver = s.name;
    r.lambda = s.lambda;
    if (s.name == "l1") {
      r.metrics = recovery_metrics(x_l1, in.x);
      r.wall_time = init_time;
    } else if (s.name == "oracle") {
      r.metrics.mse = oracle_mse(in.A, support_of(in.x), spec.noise);
    } else {
      const CsProblem prob{in.A, in.b, s.lambda, spec.p, in.x};
      SolverConfig c = cfg;
      c.rho = s.rho;
      SolveResult res;
      if (s.name == "fbs")
        res = solve_fbs(prob, c, x0);
      else if (s.name == "apg")
        res = solve_apg(prob, c, x0);
      else
        res = solve_admm(prob, c, x0);
      r.metrics = recovery_metrics(res.x, in.x);
      r.iterations = res.trace.iterations;
      r.wall_time = res.trace.wall_time;
      if (traces) traces->push_back(res.trace);
    }
    out.push_back(r);
  }
  return out;
}

inline std::vector<std::string> cs_columns(ExperimentKind kind) {
  return {"kind",  kind == ExperimentKind::cs_noisy_gaussian ? "r" : "E",
          "D",     "m",
          "n",     "s",
          "noise", "solver",
          "lambda", "trials",
          "success", "success_rate",
          "mean_rel_error", "mean_missing",
          "mean_misidentified", "mean_mse",
          "mean_iterations"};
}

/// Aggregates records (any order) into one row per (setting, solver). Sums
/// run in trial order so the result does not depend on scheduling.
inline std::vector<ResultRow> aggregate_cs(const ExperimentSpec& spec,
                                           const std::vector<CsSetting>& settings,
                                           std::vector<TrialRecord> records) {
  auto rank = [&](const std::string& name) {
    for (std::size_t i = 0; i < spec.solvers.size(); ++i)
      if (spec.solvers[i].name == name) return i;
    return spec.solvers.size();
  };
  std::sort(records.begin(), records.end(), [&](const TrialRecord& a, const TrialRecord& b) {
    if (a.setting != b.setting) return a.setting < b.setting;
    const auto ra = rank(a.solver), rb = rank(b.solver);
    if (ra != rb) return ra < rb;
    return a.trial < b.trial;
  });
  std::vector<ResultRow> rows;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    double err = 0.0, miss = 0.0, mis = 0.0, mse_sum = 0.0, iters = 0.0, wt = 0.0;
    int succ = 0;
    while (j < records.size() && records[j].setting == records[i].setting &&
           records[j].solver == records[i].solver) {
      const auto& m = records[j].metrics;
      err += m.rel_error;
      miss += double(m.missing);
      mis += double(m.misidentified);
      mse_sum += m.mse;
      iters += records[j].iterations;
      wt += records[j].wall_time;
      succ += m.success ? 1 : 0;
      ++j;
    }
    const double cnt = double(j - i);
    const auto& set = settings[records[i].setting];
    // Pseudo-solvers have no lambda; the oracle row only defines an MSE.
    const std::string& name = records[i].solver;
    const bool oracle = name == "oracle", pseudo = oracle || name == "l1";
    auto cell = [&](bool keep, double v) { return keep ? format_number(v) : std::string(); };
    ResultRow row;
    row.columns = cs_columns(spec.kind);
    row.cells = {kind_name(spec.kind), format_number(set.ensemble), format_number(set.D),
                 std::to_string(set.m), std::to_string(spec.n), std::to_string(set.s),
                 format_number(spec.noise), name, cell(!pseudo, records[i].lambda),
                 std::to_string(j - i), oracle ? "" : std::to_string(succ),
                 cell(!oracle, succ / cnt), cell(!oracle, err / cnt), cell(!oracle, miss / cnt),
                 cell(!oracle, mis / cnt), format_number(mse_sum / cnt),
                 cell(!pseudo, iters / cnt)};
    row.wall_time = wt / cnt;
    rows.push_back(std::move(row));
    i = j;
  }
  return rows;
}

inline std::string trials_csv_text(const ExperimentSpec& spec,
                                   const std::vector<CsSetting>& settings,
                                   const std::vector<TrialRecord>& records) {
  std::string out = "setting,";
  out += spec.kind == ExperimentKind::cs_noisy_gaussian ? "r" : "E";
  out += ",D,m,s,trial,seed,solver,rel_error,success,missing,misidentified,mse,iterations\n";
  for (const auto& r : records) {
    const auto& s = settings[r.setting];
    out += std::to_string(r.setting) + ',' + format_number(s.ensemble) + ',' +
           format_number(s.D) + ',' + std::to_string(s.m) + ',' + std::to_string(s.s) + ',' +
           std::to_string(r.trial) + ',' + std::to_string(spec.base_seed + std::uint64_t(r.trial)) +
           ',' + r.solver + ',' + format_number(r.metrics.rel_error) + ',' +
           (r.metrics.success ? "1" : "0") + ',' + std::to_string(r.metrics.missing) + ',' +
           std::to_string(r.metrics.misidentified) + ',' + format_number(r.metrics.mse) + ',' +
           std::to_string(r.iterations) + '\n';
  }
  return out;
}

inline ExperimentResult run_cs_experiment(const ExperimentSpec& spec) {
  ExperimentResult res;
  res.settings = cs_settings(spec);
  const std::size_t per = std::size_t(spec.trials);
  std::vector<std::vector<TrialRecord>> slots(res.settings.size() * per);
  std::vector<SolverTrace> first_traces;
  parallel_for(slots.size(), [&](std::size_t k) {
    const std::size_t set = k / per;
    const int trial = int(k % per);
    slots[k] = run_cs_trial(spec, res.settings[set], set, trial,
                            k == 0 && !spec.trace_path.empty() ? &first_traces : nullptr);
  });
  for (auto& s : slots)
    for (auto& r : s) res.records.push_back(std::move(r));
  res.rows = aggregate_cs(spec, res.settings, res.records);
  if (!spec.trace_path.empty()) {
    std::size_t t = 0;
    for (const auto& s : spec.solvers) {
      if (s.name == "l1" || s.name == "oracle") continue;
      emit_trace_plot_data(first_traces.at(t++), spec.trace_path + "." + s.name + ".dat");
    }
  }
  if (!spec.trials_path.empty())
    write_file_atomic(spec.trials_path, trials_csv_text(spec, res.settings, res.records));
  return res;
}

// ---------------------------------------------------------------------------
// Image restoration and prox self-test experiments

inline ImageGrid load_experiment_image(const ExperimentSpec& spec) {
  if (spec.image == "texture") return make_texture_image(spec.image_size);
  return read_pgm(spec.image);
}

inline ExperimentResult run_image_experiment(const ExperimentSpec& spec) {
  const ImageGrid truth = load_experiment_image(spec);
  const BlurKernel kernel = parse_blur(spec.blur);
  const ImageGrid blurred = apply_blur(kernel, truth);
  const std::size_t per = std::size_t(spec.trials), ns = spec.solvers.size();
  std::vector<QualityReport> reports(per * ns);
  parallel_for(reports.size(), [&](std::size_t k) {
    const int trial = int(k / ns);
    const SolverSpec& s = spec.solvers[k % ns];
    Rng rng(detail::stream_seed(spec.base_seed + std::uint64_t(trial), 4));
    const ImageGrid b = add_gaussian_noise(blurred, spec.noise, rng);
    RestoreResult r;
    if (s.name == "h2-admm") {
      RestorationConfig rc;
      rc.lambda = s.lambda;
      rc.rho0 = s.rho;
      rc.growth_sigma = spec.growth;
      rc.p = spec.p;
      rc.max_iters = spec.image_max_iters;
      rc.rel_tol = spec.image_rel_tol;
      rc.psnr_drop_db = spec.psnr_drop_db;
      r = restore_h2_admm(b, kernel, rc, &truth);
    } else {
      PapcConfig pc;
      pc.lambda = s.lambda;
      pc.max_iters = spec.image_max_iters;
      pc.rel_tol = spec.image_rel_tol;
      pc.psnr_drop_db = spec.psnr_drop_db;
      r = restore_tv_papc(b, kernel, pc, &truth);
    }
    reports[k] = quality(r, truth);
  });
  ExperimentResult res;
  for (std::size_t si = 0; si < ns; ++si) {
    double ps = 0.0, ss = 0.0, it = 0.0, wt = 0.0;
    for (std::size_t t = 0; t < per; ++t) {
      const auto& q = reports[t * ns + si];
      ps += q.psnr;
      ss += q.ssim;
      it += q.iterations;
      wt += q.wall_time;
    }
    const double cnt = double(per);
    const auto& s = spec.solvers[si];
    ResultRow row;
    row.columns = {"kind", "image", "size", "blur", "noise", "method", "lambda", "rho0",
                   "trials", "mean_psnr", "mean_ssim", "mean_iterations"};
    row.cells = {kind_name(spec.kind), spec.image, std::to_string(truth.n), kernel.describe(),
                 format_number(spec.noise), s.name, format_number(s.lambda),
                 s.name == "h2-admm" ? format_number(s.rho) : "",
                 std::to_string(per), format_number(ps / cnt), format_number(ss / cnt),
                 format_number(it / cnt)};
    row.wall_time = wt / cnt;
    res.rows.push_back(std::move(row));
  }
  return res;
}

struct ProxCheckCell {
  int p = 2;
  Index n = 1;
  double lambda = 0.1;
  int samples = 0;
  int failures = 0;
  double max_excess = -std::numeric_limits<double>::infinity();  // G(prox) - oracle
};

/// prox objective against the refined grid oracle for n <= 3, inputs uniform
/// in [-1, 1]^n; a failure is an excess above 1e-8.
inline std::vector<ProxCheckCell> prox_oracle_check(int samples, std::uint64_t seed) {
  std::vector<ProxCheckCell> cells;
  for (int p : {1, 2})
    for (Index n : {1, 2, 3})
      for (double lambda : {0.01, 0.1, 1.0}) cells.push_back({p, n, lambda, samples, 0});
  parallel_for(cells.size(), [&](std::size_t k) {
    auto& c = cells[k];
    Rng rng(detail::stream_seed(seed, 100 + k));
    for (int s = 0; s < c.samples; ++s) {
      Vector x(c.n);
      for (Index i = 0; i < c.n; ++i) x[i] = 2.0 * rng.uniform() - 1.0;
      const double got = prox_hp(x, c.lambda, PenaltyOrder{c.p}).objective_value;
      const double ref = oracle::minimize(x, c.lambda, c.p).refined_value;
      c.max_excess = std::max(c.max_excess, got - ref);
      if (got > ref + 1e-8) ++c.failures;
    }
  });
  return cells;
}

struct ThresholdCheck {
  int samples = 0;
  int failures = 0;
};

/// Scalar p = 2 law: prox is 0 exactly when |x| <= sqrt(2 lambda).
inline ThresholdCheck prox_threshold_check(int samples, std::uint64_t seed) {
  ThresholdCheck out;
  out.samples = samples;
  Rng rng(detail::stream_seed(seed, 7));
  for (int s = 0; s < samples; ++s) {
    const double lambda = std::pow(10.0, -3.0 + 4.0 * rng.uniform());
    const double x = (2.0 * rng.uniform() - 1.0) * 3.0 * std::sqrt(2.0 * lambda);
    const double u = prox_hp(Vector::Constant(1, x), lambda, PenaltyOrder{2}).minimizer[0];
    const bool zero = u == 0.0, expect = std::abs(x) <= std::sqrt(2.0 * lambda);
    if (zero != expect) ++out.failures;
  }
  return out;
}

inline ExperimentResult run_prox_selftest(const ExperimentSpec& spec) {
  ExperimentResult res;
  for (const auto& c : prox_oracle_check(spec.samples, spec.base_seed)) {
    ResultRow row;
    row.columns = {"kind", "p", "n", "lambda", "samples", "failures", "max_excess"};
    row.cells = {kind_name(spec.kind), std::to_string(c.p), std::to_string(c.n),
                 format_number(c.lambda), std::to_string(c.samples), std::to_string(c.failures),
                 format_number(c.max_excess)};
    res.rows.push_back(std::move(row));
  }
  return res;
}

inline std::string timing_csv_text(const std::vector<ResultRow>& rows) {
  std::string out = "row,wall_time\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out += std::to_string(i) + ',' + format_number(rows[i].wall_time) + '\n';
  return out;
}

/// Runs the experiment and writes the CSV (plus a .timing.csv sidecar).
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentResult res;
  if (is_cs(spec.kind))
    res = run_cs_experiment(spec);
  else if (spec.kind == ExperimentKind::image_restore)
    res = run_image_experiment(spec);
  else
    res = run_prox_selftest(spec);
  write_file_atomic(spec.output_path, csv_text(res.rows));
  write_file_atomic(spec.output_path + ".timing.csv", timing_csv_text(res.rows));
  return res;
}

}  // namespace ratioprox
