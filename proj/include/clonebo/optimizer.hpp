#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "clonebo/posterior.hpp"
#include "clonebo/synthetic.hpp"

namespace clonebo {

struct PoolEntry {
  Sequence sequence;
  double y = 0.0;
  double normalized = 0.0;
};

// Measured sequences with values normalized by the mean and population
// standard deviation of the initial pool. The transform is frozen at
// construction; later measurements reuse it.
class MeasurementPool {
 public:
  MeasurementPool() = default;

  const std::vector<PoolEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  double start_mean() const noexcept { return start_mean_; }
  double start_std() const noexcept { return start_std_; }
  bool contains(const Sequence& s) const { return index_.contains(s); }

  double normalize(double y) const { return (y - start_mean_) / start_std_; }

  // Returns false, leaving the pool unchanged, when the sequence is already present.
  bool add(Sequence s, double y) {
    if (!std::isfinite(y)) fail(ErrorKind::malformed_input, "measurement must be finite");
    if (index_.contains(s)) return false;
    index_.insert(s);
    entries_.push_back(PoolEntry{std::move(s), y, normalize(y)});
    return true;
  }

  // Indices of the k highest normalized values; ties keep insertion order.
  std::vector<std::size_t> top_k(std::size_t k) const {
    std::vector<std::size_t> idx(entries_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return entries_[a].normalized > entries_[b].normalized; });
    idx.resize(std::min(k, idx.size()));
    return idx;
  }

  double best_y() const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : entries_) best = std::max(best, e.y);
    return best;
  }

  friend MeasurementPool normalize_pool(const std::vector<std::pair<Sequence, double>>& raw);

 private:
  std::vector<PoolEntry> entries_;
  std::unordered_set<Sequence, SequenceHash> index_;
  double start_mean_ = 0.0;
  double start_std_ = 1.0;
};

// Duplicate sequences in `raw` keep their first measurement. A zero initial
// standard deviation (including a single entry) falls back to 1.
inline MeasurementPool normalize_pool(const std::vector<std::pair<Sequence, double>>& raw) {
  if (raw.empty()) fail(ErrorKind::insufficient_data, "cannot normalize an empty pool");
  std::vector<std::pair<Sequence, double>> unique;
  std::unordered_set<Sequence, SequenceHash> seen;
  for (const auto& [s, y] : raw) {
    if (!std::isfinite(y)) fail(ErrorKind::malformed_input, "measurement must be finite");
    if (seen.insert(s).second) unique.emplace_back(s, y);
  }
  double mean = 0.0;
  for (const auto& e : unique) mean += e.second;
  mean /= static_cast<double>(unique.size());
  double var = 0.0;
  for (const auto& e : unique) var += (e.second - mean) * (e.second - mean);
  var /= static_cast<double>(unique.size());
  MeasurementPool pool;
  pool.start_mean_ = mean;
  pool.start_std_ = var > 0.0 ? std::sqrt(var) : 1.0;
  for (auto& [s, y] : unique) pool.add(std::move(s), y);
  return pool;
}

enum class Method { clonebo, greedy, genetic };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::clonebo: return "clonebo";
    case Method::greedy: return "greedy";
    case Method::genetic: return "genetic";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  if (s == "clonebo") return Method::clonebo;
  if (s == "greedy") return Method::greedy;
  if (s == "genetic") return Method::genetic;
  fail(ErrorKind::config, "unknown method '" + std::string(s) + "'");
}

struct BoConfig {
  std::size_t top_k = 4;
  std::size_t max_substitutions = 3;
  std::size_t n_cond_max = 75;
  std::size_t budget = 50;
  SmcConfig smc;
  LikelihoodParams likelihood;
  std::vector<bool> mask;  // empty: every position may mutate
  std::size_t retry_cap = 1000;
  // Genetic baseline settings; not part of the CloneBO procedure.
  double mutation_probability = 0.5;
  bool record_timing = false;

  bool allowed(std::size_t position) const { return mask.empty() || (position < mask.size() && mask[position]); }

  void validate() const {
    if (top_k < 1) fail(ErrorKind::config, "top_k must be at least 1");
    if (n_cond_max < 1) fail(ErrorKind::config, "n_cond_max must be at least 1");
    if (!(mutation_probability >= 0.0 && mutation_probability <= 1.0))
      fail(ErrorKind::config, "mutation_probability must lie in [0, 1]");
    smc.validate();
    likelihood.validate();
  }
};

inline std::vector<std::size_t> allowed_positions(const BoConfig& config, std::size_t length) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < length; ++l)
    if (config.allowed(l)) out.push_back(l);
  return out;
}

struct Proposal {
  Sequence sequence;
  Sequence seed;  // top-K entry the proposal was derived from
  double predicted_fitness = std::numeric_limits<double>::quiet_NaN();
  std::optional<Sequence> second_parent;            // genetic only
  std::optional<std::size_t> mutated_position;      // genetic only
  std::vector<std::vector<double>> climb_fitness;   // clonebo: F along each accepted climb path
  bool used_fallback = false;
};

struct ConditioningSelection {
  ConditioningSet set;
  std::vector<std::size_t> pool_indices;
};

// Keeps the n_cond_max pool entries with the highest log p(Xhat_n | X0);
// ties keep insertion order. The measured copy of X0 is always kept.
template <CloneModel Model>
ConditioningSelection select_conditioning_subset(const Model& model, const Sequence& seed,
                                                 const MeasurementPool& pool, std::size_t n_cond_max) {
  if (pool.empty()) fail(ErrorKind::insufficient_data, "conditioning needs a non-empty pool");
  const auto& entries = pool.entries();
  std::vector<std::size_t> idx(entries.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (entries.size() > n_cond_max) {
    const auto state = state_after(model, CloneStream{seed, {}});
    std::vector<double> score(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) score[i] = sequence_logprob(model, state, entries[i].sequence);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    idx.resize(n_cond_max);
    const auto seed_it = std::find_if(entries.begin(), entries.end(), [&](const PoolEntry& e) { return e.sequence == seed; });
    if (seed_it != entries.end()) {
      const auto seed_idx = static_cast<std::size_t>(seed_it - entries.begin());
      if (std::find(idx.begin(), idx.end(), seed_idx) == idx.end()) idx.back() = seed_idx;
    }
    std::sort(idx.begin(), idx.end());
  }
  ConditioningSelection out;
  out.pool_indices = idx;
  for (std::size_t i : idx) {
    out.set.sequences.push_back(entries[i].sequence);
    out.set.values.push_back(entries[i].normalized);
  }
  return out;
}

namespace detail {

inline void require_common_length(const MeasurementPool& pool) {
  if (pool.empty()) fail(ErrorKind::insufficient_data, "pool is empty");
  const std::size_t len = pool.entries().front().sequence.size();
  for (const auto& e : pool.entries())
    if (e.sequence.size() != len) fail(ErrorKind::malformed_input, "pool sequences must share one length");
}

inline Token random_other_letter(Rng& rng, Token current, std::size_t alphabet_size) {
  auto pick = static_cast<Token>(uniform_index(rng, alphabet_size - 1));
  if (pick >= current) ++pick;
  return pick;
}

}  // namespace detail

// Thompson step: draw X0 from the top-K, sample F from the clone posterior
// conditioned on the most related measurements, then hill-climb F from every
// top-K seed with up to max_substitutions best-improvement single
// substitutions. Returns the unmeasured candidate with the highest F among
// everything visited.
template <CloneModel Model>
Proposal propose_thompson(const Model& model, const MeasurementPool& pool, const BoConfig& config, Rng& rng,
                          SmcDiagnostics* diagnostics = nullptr) {
  config.validate();
  detail::require_common_length(pool);
  const std::size_t a = model.alphabet().size();
  const auto seeds = pool.top_k(config.top_k);
  const Sequence& x0 = pool.entries()[seeds[uniform_index(rng, seeds.size())]].sequence;
  const auto selection = select_conditioning_subset(model, x0, pool, config.n_cond_max);
  const auto fitness =
      sample_fitness_posterior(model, x0, selection.set, config.smc, config.likelihood, rng, diagnostics);

  const std::size_t length = x0.size();
  const auto positions = allowed_positions(config, length);

  struct Candidate {
    Sequence sequence;
    double f;
    std::size_t seed_rank;
  };
  std::vector<Candidate> visited;
  std::unordered_set<Sequence, SequenceHash> seen;
  auto visit = [&](const Sequence& s, std::size_t rank) {
    const double f = fitness(s);
    if (seen.insert(s).second) visited.push_back({s, f, rank});
    return f;
  };

  Proposal proposal;
  for (std::size_t rank = 0; rank < seeds.size(); ++rank) {
    Sequence current = pool.entries()[seeds[rank]].sequence;
    double current_f = visit(current, rank);
    std::vector<double> path{current_f};
    for (std::size_t round = 0; round < config.max_substitutions; ++round) {
      std::optional<Sequence> best;
      double best_f = -std::numeric_limits<double>::infinity();
      for (std::size_t l : positions) {
        for (std::size_t x = 0; x < a; ++x) {
          if (static_cast<Token>(x) == current[l]) continue;
          Sequence cand = current;
          cand[l] = static_cast<Token>(x);
          const double f = visit(cand, rank);
          if (f > best_f) {
            best_f = f;
            best = std::move(cand);
          }
        }
      }
      if (!best || !(best_f > current_f)) break;
      current = std::move(*best);
      current_f = best_f;
      path.push_back(current_f);
    }
    proposal.climb_fitness.push_back(std::move(path));
  }

  const Candidate* best = nullptr;
  for (const auto& c : visited) {
    if (pool.contains(c.sequence)) continue;
    if (!best || c.f > best->f) best = &c;
  }
  if (best) {
    proposal.sequence = best->sequence;
    proposal.seed = pool.entries()[seeds[best->seed_rank]].sequence;
    proposal.predicted_fitness = best->f;
    return proposal;
  }

  // Everything visited is measured: best unmeasured neighbor of the top seed.
  const Sequence& top = pool.entries()[seeds.front()].sequence;
  std::optional<Sequence> fallback;
  double fallback_f = -std::numeric_limits<double>::infinity();
  for (std::size_t l : positions) {
    for (std::size_t x = 0; x < a; ++x) {
      if (static_cast<Token>(x) == top[l]) continue;
      Sequence cand = top;
      cand[l] = static_cast<Token>(x);
      if (pool.contains(cand)) continue;
      const double f = fitness(cand);
      if (!fallback || f > fallback_f) {
        fallback = std::move(cand);
        fallback_f = f;
      }
    }
  }
  if (!fallback) fail(ErrorKind::exhausted_search, "every reachable candidate has already been measured");
  proposal.sequence = std::move(*fallback);
  proposal.seed = top;
  proposal.predicted_fitness = fallback_f;
  proposal.used_fallback = true;
  return proposal;
}

// A uniformly random single substitution of a uniformly chosen top-K entry.
inline Proposal propose_greedy(const MeasurementPool& pool, const BoConfig& config, std::size_t alphabet_size,
                               Rng& rng) {
  detail::require_common_length(pool);
  const auto seeds = pool.top_k(config.top_k);
  const auto positions = allowed_positions(config, pool.entries().front().sequence.size());
  if (positions.empty()) fail(ErrorKind::exhausted_search, "mask allows no positions");
  for (std::size_t attempt = 0; attempt < config.retry_cap; ++attempt) {
    const Sequence& seed = pool.entries()[seeds[uniform_index(rng, seeds.size())]].sequence;
    const std::size_t l = positions[uniform_index(rng, positions.size())];
    Sequence cand = seed;
    cand[l] = detail::random_other_letter(rng, seed[l], alphabet_size);
    if (pool.contains(cand)) continue;
    Proposal p;
    p.sequence = std::move(cand);
    p.seed = seed;
    return p;
  }
  fail(ErrorKind::exhausted_search, "greedy proposal retry cap exhausted");
}

// Genetic baseline: two size-2 tournaments by normalized value, uniform
// crossover, then one random substitution with probability
// `mutation_probability`. A single-entry pool degrades to the greedy move.
inline Proposal propose_genetic(const MeasurementPool& pool, const BoConfig& config, std::size_t alphabet_size,
                                Rng& rng) {
  detail::require_common_length(pool);
  if (pool.size() < 2) return propose_greedy(pool, config, alphabet_size, rng);
  const auto& entries = pool.entries();
  const auto positions = allowed_positions(config, entries.front().sequence.size());
  auto tournament = [&]() -> const Sequence& {
    const std::size_t i = uniform_index(rng, entries.size());
    const std::size_t j = uniform_index(rng, entries.size());
    return entries[j].normalized > entries[i].normalized ? entries[j].sequence : entries[i].sequence;
  };
  for (std::size_t attempt = 0; attempt < config.retry_cap; ++attempt) {
    const Sequence& p1 = tournament();
    const Sequence& p2 = tournament();
    Sequence child = p1;
    for (std::size_t l = 0; l < child.size(); ++l)
      if (uniform01(rng) < 0.5) child[l] = p2[l];
    std::optional<std::size_t> mutated;
    if (!positions.empty() && uniform01(rng) < config.mutation_probability) {
      const std::size_t l = positions[uniform_index(rng, positions.size())];
      child[l] = detail::random_other_letter(rng, child[l], alphabet_size);
      mutated = l;
    }
    if (pool.contains(child)) continue;
    Proposal p;
    p.sequence = std::move(child);
    p.seed = p1;
    p.second_parent = p2;
    p.mutated_position = mutated;
    return p;
  }
  fail(ErrorKind::exhausted_search, "genetic proposal retry cap exhausted");
}

// Objective f(X) = log p(X | latent) of a hidden clone.
inline double synthetic_oracle(const Latent& latent, const Sequence& x) { return latent.log_prob(x); }

class LatentOracle {
 public:
  explicit LatentOracle(Latent latent) : latent_(std::move(latent)) {}
  double operator()(const Sequence& x) const { return synthetic_oracle(latent_, x); }
  const Latent& latent() const noexcept { return latent_; }

 private:
  Latent latent_;
};

// Lookup oracle over a fixed table of measured values.
class TableOracle {
 public:
  explicit TableOracle(const std::vector<std::pair<Sequence, double>>& table) {
    for (const auto& [s, y] : table) values_.emplace(s, y);
  }
  double operator()(const Sequence& x) const {
    const auto it = values_.find(x);
    if (it == values_.end()) fail(ErrorKind::malformed_input, "sequence is not in the oracle table");
    return it->second;
  }

 private:
  std::unordered_map<Sequence, double, SequenceHash> values_;
};

template <class F>
concept Oracle = std::invocable<const F&, const Sequence&> &&
                 std::convertible_to<std::invoke_result_t<const F&, const Sequence&>, double>;

struct TrajectoryStep {
  std::size_t step = 0;
  Sequence proposed;
  Sequence seed;
  double y = 0.0;
  double best_so_far = 0.0;
  double elapsed_ms = 0.0;
  bool used_fallback = false;
};

struct Trajectory {
  Method method = Method::clonebo;
  double initial_best = 0.0;
  std::vector<TrajectoryStep> steps;
  std::vector<std::vector<std::size_t>> top_k_before;  // pool indices of the top-K at each step
  std::vector<Sequence> initial_sequences;
  std::optional<std::string> truncated_reason;
};

// propose -> evaluate -> append, `budget` times.
template <CloneModel Model, Oracle O>
Trajectory run_bo(const Model& model, const O& oracle, const std::vector<std::pair<Sequence, double>>& initial,
                  Method method, const BoConfig& config, Rng& rng) {
  config.validate();
  if (config.budget < 1) fail(ErrorKind::config, "budget must be at least 1");
  MeasurementPool pool = normalize_pool(initial);
  Trajectory traj;
  traj.method = method;
  traj.initial_best = pool.best_y();
  for (const auto& e : pool.entries()) traj.initial_sequences.push_back(e.sequence);
  double best = traj.initial_best;
  const std::size_t a = model.alphabet().size();
  for (std::size_t step = 0; step < config.budget; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    Proposal proposal;
    try {
      switch (method) {
        case Method::clonebo: proposal = propose_thompson(model, pool, config, rng); break;
        case Method::greedy: proposal = propose_greedy(pool, config, a, rng); break;
        case Method::genetic: proposal = propose_genetic(pool, config, a, rng); break;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::exhausted_search) throw;
      traj.truncated_reason = e.what();
      break;
    }
    traj.top_k_before.push_back(pool.top_k(config.top_k));
    const double y = oracle(proposal.sequence);
    best = std::max(best, y);
    pool.add(proposal.sequence, y);
    const double ms =
        config.record_timing
            ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()
            : 0.0;
    traj.steps.push_back(
        TrajectoryStep{step, std::move(proposal.sequence), std::move(proposal.seed), y, best, ms, proposal.used_fallback});
  }
  return traj;
}

}  // namespace clonebo
