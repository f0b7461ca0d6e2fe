#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "clonebo/clone_model.hpp"
#include "clonebo/likelihood.hpp"
#include "clonebo/random.hpp"

namespace clonebo {

// Measured sequences with their normalized values.
struct ConditioningSet {
  std::vector<Sequence> sequences;
  std::vector<double> values;

  std::size_t size() const noexcept { return sequences.size(); }
  bool empty() const noexcept { return sequences.empty(); }

  void validate(const Alphabet& alphabet) const {
    if (sequences.size() != values.size())
      fail(ErrorKind::malformed_input, "conditioning set needs one value per sequence");
    for (const auto& s : sequences) clonebo::validate(s, alphabet);
    for (double v : values)
      if (!std::isfinite(v)) fail(ErrorKind::malformed_input, "measurement values must be finite");
  }
};

enum class ResamplingScheme { multinomial, systematic };

struct SmcConfig {
  std::size_t particles = 4;
  std::size_t members = 6;
  std::size_t max_len = 0;  // 0: twice the seed length
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  bool record_trace = true;

  void validate() const {
    if (particles < 1) fail(ErrorKind::config, "smc needs at least one particle");
    if (members < 1) fail(ErrorKind::config, "smc needs at least one member");
  }
};

template <CloneModel Model>
struct Particle {
  using State = typename Model::State;

  State base;                    // seed, completed members, current partial member
  std::vector<State> appended;   // same, with measured sequence n inserted before the partial member
  std::vector<Token> tokens;     // flat tokens after the seed's separator
  std::vector<double> base_fitness;     // log p(Xhat_n | seed, completed members)
  std::vector<double> partial_fitness;  // base_fitness plus letter contributions so far
  double log_weight = 0.0;
  std::size_t members_done = 0;
  std::size_t letter = 0;
};

// Recomputes log p(Xhat_n | completed clone) for every n and rebuilds the
// appended-context states from the current base state. Only valid at a
// member boundary.
template <CloneModel Model>
std::vector<double> refresh_conditioning_states(const Model& model, Particle<Model>& p,
                                                const ConditioningSet& cond) {
  std::vector<double> fitness(cond.size());
  p.appended.resize(cond.size());
  for (std::size_t n = 0; n < cond.size(); ++n) {
    p.appended[n] = p.base;
    fitness[n] = consume_sequence(model, p.appended[n], cond.sequences[n]);
  }
  return fitness;
}

template <CloneModel Model>
Particle<Model> make_particle(const Model& model, const Sequence& seed, const ConditioningSet& cond) {
  Particle<Model> p;
  p.base = model.initial_state();
  for (Token t : seed.tokens) model.advance(p.base, t);
  model.advance(p.base, model.alphabet().separator());
  p.base_fitness = refresh_conditioning_states(model, p, cond);
  p.partial_fitness = p.base_fitness;
  return p;
}

template <CloneModel Model>
CloneStream particle_clone(const Particle<Model>& p, const Sequence& seed, const Alphabet& alphabet) {
  std::vector<Token> flat(seed.tokens);
  flat.push_back(alphabet.separator());
  flat.insert(flat.end(), p.tokens.begin(), p.tokens.end());
  return decode(flat, alphabet);
}

// Row-major N x (A+1) table of per-letter fitness contributions together with
// the base next-token log-probabilities they were computed against.
struct TwistContributions {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> base_logprobs;
  std::vector<double> values;

  double operator()(std::size_t n, std::size_t x) const { return values[n * cols + x]; }
};

// Entry (n, x) = log p(x | context with Xhat_n appended) - log p(x | context).
// Tokens the base model cannot emit contribute 0; past the end of a
// fixed-length member only the separator is possible and both terms are 0.
template <CloneModel Model>
TwistContributions letter_twist_contributions(const Model& model, const Particle<Model>& p,
                                              const ConditioningSet& cond) {
  TwistContributions c;
  c.rows = cond.size();
  c.cols = model.alphabet().token_count();
  c.base_logprobs.resize(c.cols);
  model.next_token_logprobs(p.base, c.base_logprobs);
  c.values.assign(c.rows * c.cols, 0.0);
  std::vector<double> appended(c.cols);
  for (std::size_t n = 0; n < c.rows; ++n) {
    model.next_token_logprobs(p.appended[n], appended);
    for (std::size_t x = 0; x < c.cols; ++x) {
      if (std::isfinite(c.base_logprobs[x])) c.values[n * c.cols + x] = appended[x] - c.base_logprobs[x];
    }
  }
  return c;
}

struct TwistedDistribution {
  std::vector<double> log_probs;         // normalized proposal over tokens
  std::vector<double> base_logprobs;     // unconditional next-token log-probabilities
  std::vector<double> log_lik_after;     // log p(Y | partial fitness + column x)
  double log_lik_current = 0.0;          // log p(Y | partial fitness)
};

namespace detail {

template <CloneModel Model>
TwistedDistribution twisted_from_contributions(const Particle<Model>& p, const ConditioningSet& cond,
                                               const LikelihoodParams& params, const TwistContributions& c) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  TwistedDistribution d;
  d.base_logprobs = c.base_logprobs;
  d.log_lik_after.assign(c.cols, 0.0);
  bool any = false;
  for (double v : c.base_logprobs) any = any || std::isfinite(v);
  if (!any) fail(ErrorKind::degenerate_context, "every next token has zero base probability");
  if (cond.size() < 2) {
    // Flat likelihood: the proposal is the base distribution, bit for bit.
    d.log_probs = c.base_logprobs;
    return d;
  }
  d.log_lik_current = log_marginal_likelihood(p.partial_fitness, cond.values, params);
  d.log_probs.assign(c.cols, neg_inf);
  std::vector<double> shifted(c.rows);
  for (std::size_t x = 0; x < c.cols; ++x) {
    if (!std::isfinite(c.base_logprobs[x])) {
      d.log_lik_after[x] = neg_inf;
      continue;
    }
    for (std::size_t n = 0; n < c.rows; ++n) shifted[n] = p.partial_fitness[n] + c(n, x);
    d.log_lik_after[x] = log_marginal_likelihood(shifted, cond.values, params);
    d.log_probs[x] = c.base_logprobs[x] + d.log_lik_after[x];
  }
  const double log_z = log_sum_exp(d.log_probs);
  for (double& v : d.log_probs) v -= log_z;
  return d;
}

}  // namespace detail

// Proposal for the next token: proportional to
// p(x | context) * p(Y | partial fitness + contribution of x).
template <CloneModel Model>
TwistedDistribution twisted_next_letter_distribution(const Model& model, const Particle<Model>& p,
                                                     const ConditioningSet& cond, const LikelihoodParams& params) {
  return detail::twisted_from_contributions(p, cond, params, letter_twist_contributions(model, p, cond));
}

inline std::vector<double> normalized_weights(std::span<const double> log_weights) {
  const double log_z = log_sum_exp(log_weights);
  if (!std::isfinite(log_z)) fail(ErrorKind::degenerate_weights, "all particle weights are zero");
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - log_z);
  return w;
}

// Effective sample size 1 / sum w_d^2 of normalized weights.
inline double ess(std::span<const double> normalized) {
  double sum_sq = 0.0;
  for (double w : normalized) sum_sq += w * w;
  if (!(sum_sq > 0.0)) fail(ErrorKind::degenerate_weights, "all particle weights are zero");
  return 1.0 / sum_sq;
}

inline std::vector<std::size_t> resample_indices(std::span<const double> normalized, CounterStream& stream,
                                                 ResamplingScheme scheme) {
  const std::size_t d = normalized.size();
  std::vector<double> cdf(d);
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) cdf[i] = acc += normalized[i];
  auto locate = [&](double u) {
    const double target = u * acc;
    std::size_t i = 0;
    while (i + 1 < d && !(target < cdf[i])) ++i;
    return i;
  };
  std::vector<std::size_t> idx(d);
  if (scheme == ResamplingScheme::systematic) {
    const double u0 = stream.uniform01();
    for (std::size_t k = 0; k < d; ++k) idx[k] = locate((static_cast<double>(k) + u0) / static_cast<double>(d));
  } else {
    for (std::size_t k = 0; k < d; ++k) idx[k] = locate(stream.uniform01());
  }
  return idx;
}

// Resamples when ESS < sqrt(D); afterwards every weight is 1/D.
template <class P>
bool maybe_resample(std::vector<P>& particles, CounterStream& stream,
                    ResamplingScheme scheme = ResamplingScheme::multinomial, double* ess_out = nullptr) {
  std::vector<double> log_w(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) log_w[i] = particles[i].log_weight;
  const auto w = normalized_weights(log_w);
  const double e = ess(w);
  if (ess_out) *ess_out = e;
  if (!(e < std::sqrt(static_cast<double>(particles.size())))) return false;
  const auto idx = resample_indices(w, stream, scheme);
  std::vector<P> next;
  next.reserve(particles.size());
  for (std::size_t k : idx) next.push_back(particles[k]);
  const double reset = -std::log(static_cast<double>(particles.size()));
  for (auto& p : next) p.log_weight = reset;
  particles = std::move(next);
  return true;
}

// After a member is complete: replace the telescoped fitness with the exact
// log p(Xhat_n | completed clone) and multiply the weight by
// p(Y | exact) / p(Y | telescoped). Returns the log multiplier.
template <CloneModel Model>
double end_of_member_correction(Particle<Model>& p, const Model& model, const ConditioningSet& cond,
                                const LikelihoodParams& params) {
  auto exact = refresh_conditioning_states(model, p, cond);
  double log_multiplier = 0.0;
  if (cond.size() >= 2) {
    log_multiplier = log_marginal_likelihood(exact, cond.values, params) -
                     log_marginal_likelihood(p.partial_fitness, cond.values, params);
  }
  p.log_weight += log_multiplier;
  p.base_fitness = exact;
  p.partial_fitness = std::move(exact);
  return log_multiplier;
}

struct SmcTraceRow {
  std::size_t step = 0;
  std::size_t member = 0;
  std::size_t letter = 0;
  std::size_t particle = 0;
  double ess = 0.0;
  bool resampled = false;
  double log_weight = 0.0;
  double log_lik = 0.0;
};

struct SmcDiagnostics {
  std::vector<SmcTraceRow> trace;
  std::vector<double> ess_trace;
  std::size_t resample_events = 0;
  std::size_t truncated_members = 0;
  std::vector<double> correction_log_multipliers;
  double max_abs_weight_increment = 0.0;
  double final_log_lik = 0.0;
  std::size_t chosen_particle = 0;
};

struct StepContext {
  std::size_t max_len = 0;
  std::size_t target_members = 0;
};

// Advances one particle by one token drawn from its twisted proposal and
// returns the log-weight increment
//   log p(x) - log q(x) + log p(Y | F^(:l+1)) - log p(Y | F^(:l)).
// A variable-length member that reaches max_len is closed with a forced
// separator; only the likelihood ratio then enters the weight.
template <CloneModel Model>
double advance_particle(Particle<Model>& p, const Model& model, const ConditioningSet& cond,
                        const LikelihoodParams& params, double u, const StepContext& ctx,
                        SmcDiagnostics* diagnostics = nullptr) {
  const Alphabet& alphabet = model.alphabet();
  const TwistContributions c = letter_twist_contributions(model, p, cond);
  const TwistedDistribution d = detail::twisted_from_contributions(p, cond, params, c);
  const bool forced = !model.fixed_length() && p.letter >= ctx.max_len;
  std::size_t x;
  double increment;
  if (forced) {
    x = static_cast<std::size_t>(alphabet.separator());
    increment = d.log_lik_after[x] - d.log_lik_current;
    if (diagnostics) ++diagnostics->truncated_members;
  } else {
    x = sample_from_log(u, d.log_probs);
    increment = d.base_logprobs[x] - d.log_probs[x] + d.log_lik_after[x] - d.log_lik_current;
  }
  p.log_weight += increment;
  const auto token = static_cast<Token>(x);
  model.advance(p.base, token);
  for (auto& s : p.appended) model.advance(s, token);
  for (std::size_t n = 0; n < c.rows; ++n) p.partial_fitness[n] += c(n, x);
  p.tokens.push_back(token);
  if (token == alphabet.separator()) {
    ++p.members_done;
    p.letter = 0;
    const double mult = end_of_member_correction(p, model, cond, params);
    if (diagnostics) diagnostics->correction_log_multipliers.push_back(mult);
  } else {
    ++p.letter;
  }
  return increment;
}

template <CloneModel Model>
struct SmcRun {
  std::vector<Particle<Model>> particles;
  std::vector<double> weights;  // normalized final weights
  SmcDiagnostics diagnostics;
};

// Twisted SMC over clones of `config.members` members following `seed`,
// targeting p(X_1:M | X0) p(Y | F^M). All randomness comes from `seed_value`
// through per-particle counter streams.
template <CloneModel Model>
SmcRun<Model> run_twisted_smc(const Model& model, const Sequence& seed, const ConditioningSet& cond,
                              const SmcConfig& config, const LikelihoodParams& params, std::uint64_t seed_value) {
  config.validate();
  params.validate();
  const Alphabet& alphabet = model.alphabet();
  validate(seed, alphabet);
  cond.validate(alphabet);
  if (auto len = model.fixed_length(); len && seed.size() != *len)
    fail(ErrorKind::malformed_input, "seed length does not match the model's fixed length");

  const std::size_t d = config.particles;
  StepContext ctx{config.max_len == 0 ? default_max_len(seed) : config.max_len, config.members};
  SmcRun<Model> run;
  run.particles.assign(d, make_particle(model, seed, cond));
  const double initial = -std::log(static_cast<double>(d));
  for (auto& p : run.particles) p.log_weight = initial;

  std::vector<CounterStream> streams;
  streams.reserve(d);
  for (std::size_t i = 0; i < d; ++i) streams.emplace_back(derive_seed(seed_value, i));
  CounterStream resample_stream(derive_seed(seed_value, 0xffffffffULL));

  auto& diag = run.diagnostics;
  for (std::size_t step = 0;; ++step) {
    bool active = false;
    for (std::size_t i = 0; i < d; ++i) {
      auto& p = run.particles[i];
      if (p.members_done >= config.members) continue;
      active = true;
      const double inc = advance_particle(p, model, cond, params, streams[i].uniform01(), ctx, &diag);
      diag.max_abs_weight_increment = std::max(diag.max_abs_weight_increment, std::abs(inc));
    }
    if (!active) break;
    double e = 0.0;
    const bool resampled = maybe_resample(run.particles, resample_stream, config.resampling, &e);
    diag.ess_trace.push_back(e);
    if (resampled) ++diag.resample_events;
    if (config.record_trace) {
      for (std::size_t i = 0; i < d; ++i) {
        const auto& p = run.particles[i];
        diag.trace.push_back({step, p.members_done, p.letter, i, e, resampled, p.log_weight,
                              log_likelihood_or_flat(p.partial_fitness, cond.values, params)});
      }
    }
  }
  std::vector<double> log_w(d);
  for (std::size_t i = 0; i < d; ++i) log_w[i] = run.particles[i].log_weight;
  run.weights = normalized_weights(log_w);
  return run;
}

struct PosteriorClone {
  CloneStream clone;
  SmcDiagnostics diagnostics;
};

// One clone drawn from the final weighted particle set.
template <CloneModel Model>
PosteriorClone sample_posterior_clone(const Model& model, const Sequence& seed, const ConditioningSet& cond,
                                      const SmcConfig& config, const LikelihoodParams& params, Rng& rng) {
  const std::uint64_t seed_value = rng();
  auto run = run_twisted_smc(model, seed, cond, config, params, seed_value);
  std::vector<double> log_w(run.weights.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) log_w[i] = std::log(run.weights[i]);
  const std::size_t pick = sample_from_log(rng, log_w);
  PosteriorClone out;
  out.clone = particle_clone(run.particles[pick], seed, model.alphabet());
  out.diagnostics = std::move(run.diagnostics);
  out.diagnostics.chosen_particle = pick;
  out.diagnostics.final_log_lik =
      log_likelihood_or_flat(run.particles[pick].base_fitness, cond.values, params);
  return out;
}

// F^M_n = log p(Xhat_n | clone) for every conditioning sequence.
template <CloneModel Model>
std::vector<double> clone_fitness(const Model& model, const CloneStream& clone, const ConditioningSet& cond) {
  const auto state = state_after(model, clone);
  std::vector<double> f(cond.size());
  for (std::size_t n = 0; n < cond.size(); ++n) f[n] = sequence_logprob(model, state, cond.sequences[n]);
  return f;
}

// Baseline without twisting: D clones from the prior, importance weighted by
// p(Y | F^M), one drawn by weight.
template <CloneModel Model>
PosteriorClone sample_importance_clone(const Model& model, const Sequence& seed, const ConditioningSet& cond,
                                       std::size_t samples, std::size_t members, const LikelihoodParams& params,
                                       Rng& rng, std::size_t max_len = 0) {
  if (samples < 1) fail(ErrorKind::config, "importance sampling needs at least one sample");
  std::vector<CloneStream> clones;
  std::vector<double> log_lik;
  SmcDiagnostics diag;
  SampleDiagnostics sd;
  for (std::size_t i = 0; i < samples; ++i) {
    clones.push_back(sample_clone(model, seed, members, rng, max_len, &sd));
    log_lik.push_back(log_likelihood_or_flat(clone_fitness(model, clones.back(), cond), cond.values, params));
  }
  const std::size_t pick = sample_from_log(rng, log_lik);
  diag.truncated_members = sd.truncated_members;
  diag.chosen_particle = pick;
  diag.final_log_lik = log_lik[pick];
  return PosteriorClone{std::move(clones[pick]), std::move(diag)};
}

}  // namespace clonebo
