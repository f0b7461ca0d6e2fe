#pragma once

#include <cmath>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "clonebo/synthetic.hpp"
#include "clonebo/twisted_smc.hpp"

namespace clonebo {

// A sampled fitness function F(X) = log p(X | X0:M), the martingale-posterior
// stand-in for log p(X | latent clone). The model must outlive the sample.
// Evaluations are memoized; the cache is guarded so concurrent queries are
// safe.
template <CloneModel Model>
class FitnessSample {
 public:
  FitnessSample(const Model& model, CloneStream clone)
      : model_(&model),
        clone_(std::move(clone)),
        state_(state_after(model, clone_)),
        mutex_(std::make_unique<std::mutex>()) {}

  const CloneStream& clone() const noexcept { return clone_; }
  const Model& model() const noexcept { return *model_; }

  double operator()(const Sequence& x) const {
    {
      std::lock_guard lock(*mutex_);
      if (auto it = cache_.find(x); it != cache_.end()) return it->second;
    }
    validate(x, model_->alphabet());
    const double value = sequence_logprob(*model_, state_, x);
    std::lock_guard lock(*mutex_);
    cache_.emplace(x, value);
    return value;
  }

  // Bypasses the cache.
  double evaluate_fresh(const Sequence& x) const {
    validate(x, model_->alphabet());
    return sequence_logprob(*model_, state_, x);
  }

  std::size_t cache_size() const {
    std::lock_guard lock(*mutex_);
    return cache_.size();
  }

 private:
  const Model* model_;
  CloneStream clone_;
  typename Model::State state_;
  std::unique_ptr<std::mutex> mutex_;
  mutable std::unordered_map<Sequence, double, SequenceHash> cache_;
};

template <CloneModel Model>
double fitness_eval(const FitnessSample<Model>& sample, const Sequence& x) {
  return sample(x);
}

template <CloneModel Model>
FitnessSample<Model> sample_fitness_prior(const Model& model, const Sequence& seed, std::size_t members, Rng& rng,
                                          std::size_t max_len = 0) {
  return FitnessSample<Model>(model, sample_clone(model, seed, members, rng, max_len));
}

template <CloneModel Model>
FitnessSample<Model> sample_fitness_posterior(const Model& model, const Sequence& seed, const ConditioningSet& cond,
                                              const SmcConfig& config, const LikelihoodParams& params, Rng& rng,
                                              SmcDiagnostics* diagnostics = nullptr) {
  auto posterior = sample_posterior_clone(model, seed, cond, config, params, rng);
  if (diagnostics) *diagnostics = std::move(posterior.diagnostics);
  return FitnessSample<Model>(model, std::move(posterior.clone));
}

namespace detail {

inline double kl_divergence(std::span<const double> log_p, std::span<const double> log_q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    if (!std::isfinite(log_p[i])) continue;
    kl += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  }
  return std::max(kl, 0.0);
}

}  // namespace detail

// Mean over the first n_positions positions of the next member of
// KL(p(. | large context) || p(. | small context)); the in-progress prefix at
// position l is the seed's first l letters.
template <CloneModel Model>
double predictive_kl(const Model& model, const CloneStream& small, const CloneStream& large,
                     std::size_t n_positions) {
  if (small.seed != large.seed) fail(ErrorKind::malformed_input, "contexts must share the seed");
  n_positions = std::min(n_positions, small.seed.size());
  if (n_positions == 0) return 0.0;
  auto s_small = state_after(model, small);
  auto s_large = state_after(model, large);
  std::vector<double> lp_small(model.alphabet().token_count());
  std::vector<double> lp_large(model.alphabet().token_count());
  double total = 0.0;
  for (std::size_t l = 0; l < n_positions; ++l) {
    model.next_token_logprobs(s_small, lp_small);
    model.next_token_logprobs(s_large, lp_large);
    total += detail::kl_divergence(lp_large, lp_small);
    model.advance(s_small, small.seed[l]);
    model.advance(s_large, large.seed[l]);
  }
  return total / static_cast<double>(n_positions);
}

// Mean per-position KL(latent || predictive given the context), the distance
// of the martingale predictive from the latent it approximates.
template <CloneModel Model>
double latent_predictive_kl(const Model& model, const Latent& latent, const CloneStream& context) {
  const std::size_t length = latent.length();
  if (context.seed.size() != length) fail(ErrorKind::malformed_input, "seed length does not match latent");
  auto state = state_after(model, context);
  std::vector<double> lp(model.alphabet().token_count());
  std::vector<double> log_theta(model.alphabet().token_count(), -std::numeric_limits<double>::infinity());
  double total = 0.0;
  for (std::size_t l = 0; l < length; ++l) {
    model.next_token_logprobs(state, lp);
    for (std::size_t x = 0; x < latent.probs[l].size(); ++x) log_theta[x] = std::log(latent.probs[l][x]);
    total += detail::kl_divergence(log_theta, lp);
    model.advance(state, context.seed[l]);
  }
  return total / static_cast<double>(length);
}

}  // namespace clonebo
