#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "clonebo/io.hpp"
#include "clonebo/optimizer.hpp"

namespace clonebo {

// Everything a run needs, reproducible from this object plus `seed`.
struct RunConfig {
  Alphabet alphabet{4};
  json model = json{{"kind", "conjugate"}, {"length", 10}, {"alpha", 0.5}};
  json oracle = json{{"kind", "latent"}, {"alpha", 0.5}};
  json start = json{{"kind", "oracle_sample"}, {"count", 1}};
  std::vector<Method> methods{Method::clonebo};
  BoConfig bo;
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path output_dir = "out";
  std::filesystem::path base_dir = ".";  // relative file references resolve against this
};

namespace detail {

template <class T>
T get_key(const json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "invalid config key '" + path + key + "': " + e.what());
  }
}

template <class T>
void read_optional(const json& j, const std::string& key, const std::string& path, T& out) {
  if (j.contains(key)) out = get_key<T>(j, key, path);
}

inline void check_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) fail(ErrorKind::config, "invalid config key '" + path + "': expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      fail(ErrorKind::config, "invalid config key '" + path + k + "': unknown key");
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
  using detail::read_optional;
  detail::check_keys(j, "", {"alphabet", "model", "oracle", "start", "method", "methods", "bo", "smc", "likelihood",
                             "replicates", "seed", "threads", "output_dir", "record_timing"});
  RunConfig c;
  c.base_dir = base_dir;
  try {
    if (j.contains("alphabet")) c.alphabet = alphabet_from_json(j.at("alphabet"));
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("invalid config key 'alphabet': ") + e.what());
  }
  if (j.contains("model")) c.model = j.at("model");
  if (j.contains("oracle")) c.oracle = j.at("oracle");
  if (j.contains("start")) c.start = j.at("start");
  if (j.contains("method")) c.methods = {parse_method(detail::get_key<std::string>(j, "method", ""))};
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : detail::get_key<std::vector<std::string>>(j, "methods", "")) c.methods.push_back(parse_method(m));
    if (c.methods.empty()) fail(ErrorKind::config, "invalid config key 'methods': empty list");
  }
  if (j.contains("bo")) {
    const json& b = j.at("bo");
    detail::check_keys(b, "bo.", {"top_k", "max_substitutions", "n_cond_max", "budget", "mask", "retry_cap",
                                  "mutation_probability"});
    read_optional(b, "top_k", "bo.", c.bo.top_k);
    read_optional(b, "max_substitutions", "bo.", c.bo.max_substitutions);
    read_optional(b, "n_cond_max", "bo.", c.bo.n_cond_max);
    read_optional(b, "budget", "bo.", c.bo.budget);
    read_optional(b, "mask", "bo.", c.bo.mask);
    read_optional(b, "retry_cap", "bo.", c.bo.retry_cap);
    read_optional(b, "mutation_probability", "bo.", c.bo.mutation_probability);
  }
  if (j.contains("smc")) {
    const json& s = j.at("smc");
    detail::check_keys(s, "smc.", {"particles", "members", "max_len", "resampling"});
    read_optional(s, "particles", "smc.", c.bo.smc.particles);
    read_optional(s, "members", "smc.", c.bo.smc.members);
    read_optional(s, "max_len", "smc.", c.bo.smc.max_len);
    if (s.contains("resampling")) {
      const auto r = detail::get_key<std::string>(s, "resampling", "smc.");
      if (r == "multinomial") {
        c.bo.smc.resampling = ResamplingScheme::multinomial;
      } else if (r == "systematic") {
        c.bo.smc.resampling = ResamplingScheme::systematic;
      } else {
        fail(ErrorKind::config, "invalid config key 'smc.resampling': expected multinomial or systematic");
      }
    }
  }
  c.bo.smc.record_trace = false;
  if (j.contains("likelihood")) {
    const json& l = j.at("likelihood");
    detail::check_keys(l, "likelihood.", {"sigma_tilde", "var_floor"});
    read_optional(l, "sigma_tilde", "likelihood.", c.bo.likelihood.sigma_tilde);
    read_optional(l, "var_floor", "likelihood.", c.bo.likelihood.var_floor);
  }
  c.bo.likelihood.n_cond_max = c.bo.n_cond_max;
  read_optional(j, "replicates", "", c.replicates);
  read_optional(j, "seed", "", c.seed);
  read_optional(j, "threads", "", c.threads);
  read_optional(j, "record_timing", "", c.bo.record_timing);
  if (j.contains("output_dir")) c.output_dir = detail::get_key<std::string>(j, "output_dir", "");
  if (c.replicates < 1) fail(ErrorKind::config, "invalid config key 'replicates': must be at least 1");
  if (c.threads < 1) fail(ErrorKind::config, "invalid config key 'threads': must be at least 1");
  try {
    c.bo.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("invalid config: ") + e.what());
  }
  return c;
}

// Applies a `path.to.key=value` override; the value is parsed as JSON and
// falls back to a plain string.
inline void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) fail(ErrorKind::config, "override must look like key=value");
  std::string pointer = "/" + std::string(assignment.substr(0, eq));
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  const std::string value(assignment.substr(eq + 1));
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  j[json::json_pointer(pointer)] = parsed;
}

struct Problem {
  std::optional<Latent> latent;
  std::vector<std::pair<Sequence, double>> table;  // table oracle
  std::vector<std::pair<Sequence, double>> initial;
};

inline std::filesystem::path resolve(const RunConfig& c, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : c.base_dir / path;
}

inline AnyModel load_model(const RunConfig& c) {
  if (c.model.contains("file")) {
    const auto path = resolve(c, c.model.at("file").get<std::string>());
    return model_from_json(parse_json(read_text(path), path.string()));
  }
  return model_from_json(c.model, c.alphabet);
}

inline std::size_t model_length_hint(const RunConfig& c, const AnyModel& model) {
  if (const auto* m = std::get_if<ConjugateModel>(&model)) return m->length();
  if (c.oracle.contains("length")) return c.oracle.at("length").get<std::size_t>();
  fail(ErrorKind::config, "invalid config key 'oracle.length': required for variable-length models");
}

// Builds the objective and starting measurements for one replicate. The
// latent of a synthetic oracle is drawn per replicate unless a latent file is
// given.
inline Problem make_problem(const RunConfig& c, const AnyModel& model, std::uint64_t replicate_seed) {
  Problem problem;
  Rng rng(derive_seed(replicate_seed, 1));
  const std::string kind = c.oracle.value("kind", std::string("latent"));
  const Alphabet& alphabet = std::visit([](const auto& m) -> const Alphabet& { return m.alphabet(); }, model);
  if (kind == "latent") {
    if (c.oracle.contains("file")) {
      const auto path = resolve(c, c.oracle.at("file").get<std::string>());
      const auto latents = latents_from_json(parse_json(read_text(path), path.string()));
      const auto index = c.oracle.value("index", std::size_t{0});
      if (index >= latents.size()) fail(ErrorKind::config, "invalid config key 'oracle.index': out of range");
      problem.latent = latents[index];
    } else {
      const std::size_t length = model_length_hint(c, model);
      const json& a = c.oracle.contains("alpha") ? c.oracle.at("alpha") : json(0.5);
      ConjugateModel prior = a.is_number() ? ConjugateModel(alphabet, length, a.get<double>())
                                           : ConjugateModel(alphabet, length, std::span<const double>(a.get<std::vector<double>>()));
      problem.latent = sample_latent(prior, rng);
    }
  } else if (kind == "table") {
    const auto path = resolve(c, c.oracle.at("file").get<std::string>());
    problem.table = parse_pool_csv(read_text(path), alphabet, path.string());
  } else {
    fail(ErrorKind::config, "invalid config key 'oracle.kind': unknown kind '" + kind + "'");
  }

  const std::string start = c.start.value("kind", std::string("oracle_sample"));
  if (start == "oracle_sample") {
    if (!problem.latent) fail(ErrorKind::config, "invalid config key 'start.kind': oracle_sample needs a latent oracle");
    const auto count = c.start.value("count", std::size_t{1});
    std::unordered_set<Sequence, SequenceHash> seen;
    for (std::size_t attempt = 0; problem.initial.size() < count && attempt < 100 * count + 100; ++attempt) {
      Sequence s = problem.latent->sample(rng);
      if (!seen.insert(s).second) continue;
      const double y = synthetic_oracle(*problem.latent, s);
      problem.initial.emplace_back(std::move(s), y);
    }
  } else if (start == "pool") {
    const auto path = resolve(c, c.start.at("file").get<std::string>());
    problem.initial = parse_pool_csv(read_text(path), alphabet, path.string());
  } else if (start == "table_first") {
    if (problem.table.empty()) fail(ErrorKind::config, "invalid config key 'start.kind': table_first needs a table oracle");
    problem.initial.push_back(problem.table.front());
  } else {
    fail(ErrorKind::config, "invalid config key 'start.kind': unknown kind '" + start + "'");
  }
  if (problem.initial.empty()) fail(ErrorKind::config, "invalid config key 'start': no starting measurements");
  return problem;
}

inline std::uint64_t method_seed(std::uint64_t replicate_seed, Method m) {
  return derive_seed(replicate_seed, 100 + static_cast<std::uint64_t>(m));
}

inline Trajectory run_replicate(const RunConfig& c, const AnyModel& model, std::size_t replicate, Method method) {
  const std::uint64_t rs = derive_seed(c.seed, replicate);
  const Problem problem = make_problem(c, model, rs);
  Rng rng(method_seed(rs, method));
  return std::visit(
      [&](const auto& m) {
        if (problem.latent) return run_bo(m, LatentOracle(*problem.latent), problem.initial, method, c.bo, rng);
        return run_bo(m, TableOracle(problem.table), problem.initial, method, c.bo, rng);
      },
      model);
}

struct StepStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct BenchmarkSummary {
  std::vector<std::string> methods;
  std::vector<StepStats> stats;  // parallel to methods
  std::size_t replicates = 0;
  std::vector<double> runtime_ms;  // per method total; zeros unless timing is recorded
};

// Per-step mean and population standard deviation of best-so-far across
// trajectories; shorter trajectories are right-padded with their last value.
inline StepStats aggregate(const std::vector<std::vector<double>>& best_so_far) {
  if (best_so_far.empty()) fail(ErrorKind::insufficient_data, "cannot aggregate zero trajectories");
  std::size_t steps = 0;
  for (const auto& t : best_so_far) {
    if (t.empty()) fail(ErrorKind::insufficient_data, "cannot aggregate an empty trajectory");
    steps = std::max(steps, t.size());
  }
  StepStats s;
  s.mean.assign(steps, 0.0);
  s.std.assign(steps, 0.0);
  const auto n = static_cast<double>(best_so_far.size());
  for (std::size_t k = 0; k < steps; ++k) {
    std::vector<double> column;
    for (const auto& t : best_so_far) column.push_back(k < t.size() ? t[k] : t.back());
    double mean = 0.0;
    for (double v : column) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : column) var += (v - mean) * (v - mean);
    s.mean[k] = mean;
    s.std[k] = std::sqrt(var / n);
  }
  return s;
}

inline StepStats aggregate(const std::vector<Trajectory>& trajectories) {
  std::vector<std::vector<double>> columns;
  for (const auto& t : trajectories) {
    std::vector<double> b;
    for (const auto& s : t.steps) b.push_back(s.best_so_far);
    if (b.empty()) b.push_back(t.initial_best);
    columns.push_back(std::move(b));
  }
  return aggregate(columns);
}

// One-sided Mann-Whitney U test of H1: values in `x` tend to exceed those in
// `y`. Exact null distribution without ties; normal approximation with tie
// correction and continuity correction otherwise. Returns the p-value.
inline double mann_whitney_greater(std::span<const double> x, std::span<const double> y) {
  const std::size_t n1 = x.size(), n2 = y.size();
  if (n1 == 0 || n2 == 0) fail(ErrorKind::insufficient_data, "rank test needs two non-empty samples");
  double u = 0.0;
  bool ties = false;
  for (double a : x)
    for (double b : y) {
      if (a > b) u += 1.0;
      else if (a == b) {
        u += 0.5;
        ties = true;
      }
    }
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 1; i < all.size(); ++i) ties = ties || all[i] == all[i - 1];
  if (!ties && n1 * n2 <= 10000) {
    // counts[k] = number of arrangements with U == k; build by adding x's one at a time.
    const std::size_t umax = n1 * n2;
    std::vector<std::vector<double>> prev(n2 + 1, std::vector<double>(umax + 1, 0.0));
    for (std::size_t j = 0; j <= n2; ++j) prev[j][0] = 1.0;  // zero x's
    for (std::size_t i = 1; i <= n1; ++i) {
      std::vector<std::vector<double>> cur(n2 + 1, std::vector<double>(umax + 1, 0.0));
      cur[0][0] = 1.0;
      for (std::size_t j = 1; j <= n2; ++j) {
        for (std::size_t k = 0; k <= i * j; ++k) {
          // largest element is an x (beats all j y's) or a y
          double v = cur[j - 1][k];
          if (k >= j) v += prev[j][k - j];
          cur[j][k] = v;
        }
      }
      prev = std::move(cur);
    }
    double total = 0.0, tail = 0.0;
    const auto u_obs = static_cast<std::size_t>(std::llround(u));
    for (std::size_t k = 0; k <= umax; ++k) {
      total += prev[n2][k];
      if (k >= u_obs) tail += prev[n2][k];
    }
    return tail / total;
  }
  const double nn = static_cast<double>(n1 + n2);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double mu = 0.5 * static_cast<double>(n1 * n2);
  const double var = static_cast<double>(n1 * n2) / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (var <= 0.0) return 1.0;
  const double z = (u - mu - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

// One-sided Wilcoxon signed-rank test of H1: x tends to exceed its paired y.
// Zero differences are dropped and tied magnitudes get midranks. Exact null
// distribution when there are no ties and at most 50 pairs remain, normal
// approximation with tie and continuity correction otherwise.
inline double wilcoxon_signed_rank_greater(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::malformed_input, "signed-rank test needs paired samples");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  const std::size_t n = d.size();
  if (n == 0) return 1.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(n);
  bool ties = false;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = 0.5 * static_cast<double>(i + j + 1);
    const double t = static_cast<double>(j - i);
    if (j - i > 1) ties = true;
    tie_term += t * t * t - t;
    i = j;
  }
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0.0) w += rank[i];
  if (!ties && n <= 50) {
    const std::size_t wmax = n * (n + 1) / 2;
    std::vector<double> counts(wmax + 1, 0.0);
    counts[0] = 1.0;
    for (std::size_t r = 1; r <= n; ++r)
      for (std::size_t k = wmax; k >= r; --k) counts[k] += counts[k - r];
    double tail = 0.0;
    for (auto k = static_cast<std::size_t>(std::llround(w)); k <= wmax; ++k) tail += counts[k];
    return tail / std::ldexp(1.0, static_cast<int>(n));
  }
  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) return 1.0;
  const double z = (w - mu - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

struct BenchmarkResult {
  std::vector<std::vector<Trajectory>> trajectories;  // [method][replicate]
  BenchmarkSummary summary;
};

// Runs every (method, replicate) pair on up to `threads` workers. Each pair
// derives its randomness from the master seed alone, so the output does not
// depend on scheduling.
inline BenchmarkResult run_benchmark(const RunConfig& c) {
  const AnyModel model = load_model(c);
  const std::size_t n_methods = c.methods.size();
  const std::size_t jobs = n_methods * c.replicates;
  BenchmarkResult result;
  result.trajectories.assign(n_methods, std::vector<Trajectory>(c.replicates));
  std::vector<double> elapsed(jobs, 0.0);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t job = next++; job < jobs; job = next++) {
      const std::size_t mi = job / c.replicates;
      const std::size_t r = job % c.replicates;
      try {
        result.trajectories[mi][r] = run_replicate(c, model, r, c.methods[mi]);
        for (const auto& s : result.trajectories[mi][r].steps) elapsed[job] += s.elapsed_ms;
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(c.threads, jobs);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  result.summary.replicates = c.replicates;
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    result.summary.methods.emplace_back(to_string(c.methods[mi]));
    result.summary.stats.push_back(aggregate(result.trajectories[mi]));
    double total = 0.0;
    for (std::size_t r = 0; r < c.replicates; ++r) total += elapsed[mi * c.replicates + r];
    result.summary.runtime_ms.push_back(total);
  }
  return result;
}

inline json summary_to_json(const BenchmarkSummary& s, bool with_runtime) {
  json methods = json::object();
  for (std::size_t i = 0; i < s.methods.size(); ++i) {
    json m{{"mean", s.stats[i].mean}, {"std", s.stats[i].std}};
    if (with_runtime) m["runtime_ms"] = s.runtime_ms[i];
    methods[s.methods[i]] = m;
  }
  return json{{"replicates", s.replicates}, {"methods", methods}};
}

inline std::string format_plot_csv(const BenchmarkSummary& s) {
  std::string out = "step,method,mean,std\n";
  for (std::size_t i = 0; i < s.methods.size(); ++i)
    for (std::size_t k = 0; k < s.stats[i].mean.size(); ++k)
      out += std::to_string(k) + "," + s.methods[i] + "," + format_double(s.stats[i].mean[k]) + "," +
             format_double(s.stats[i].std[k]) + "\n";
  return out;
}

inline std::filesystem::path trajectory_path(const std::filesystem::path& dir, Method m, std::size_t replicate) {
  return dir / ("trajectory_" + std::string(to_string(m)) + "_r" + std::to_string(replicate) + ".csv");
}

inline void write_benchmark(const RunConfig& c, const BenchmarkResult& r) {
  const Alphabet& alphabet = c.alphabet;
  for (std::size_t mi = 0; mi < c.methods.size(); ++mi)
    for (std::size_t rep = 0; rep < c.replicates; ++rep)
      write_text(trajectory_path(c.output_dir, c.methods[mi], rep),
                 format_trajectory_csv(r.trajectories[mi][rep], rep, alphabet));
  write_text(c.output_dir / "summary.json", summary_to_json(r.summary, c.bo.record_timing).dump(2) + "\n");
  write_text(c.output_dir / "plot_data.csv", format_plot_csv(r.summary));
}

}  // namespace clonebo
