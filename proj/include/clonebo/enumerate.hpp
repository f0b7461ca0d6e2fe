#pragma once

#include <cmath>
#include <vector>

#include "clonebo/twisted_smc.hpp"

namespace clonebo {

// Exact table of p(X_1:M | X0, Y) proportional to p(X_1:M | X0) p(Y | F^M)
// over every clone of a fixed-length model. Entry i holds the clone whose
// members, read as base-A numbers (position 0 most significant), form the
// mixed-radix index with member 1 least significant.
struct EnumeratedPosterior {
  std::size_t sequences_per_member = 0;
  std::size_t members = 0;
  std::vector<double> log_prior;  // log p(X_1:M | X0)
  std::vector<double> probs;      // normalized posterior
};

inline std::size_t sequence_index(const Sequence& x, std::size_t alphabet_size) {
  std::size_t idx = 0;
  for (Token t : x.tokens) idx = idx * alphabet_size + static_cast<std::size_t>(t);
  return idx;
}

inline Sequence sequence_from_index(std::size_t idx, std::size_t alphabet_size, std::size_t length) {
  Sequence x;
  x.tokens.assign(length, 0);
  for (std::size_t l = length; l-- > 0;) {
    x.tokens[l] = static_cast<Token>(idx % alphabet_size);
    idx /= alphabet_size;
  }
  return x;
}

inline std::size_t clone_index(const CloneStream& clone, std::size_t alphabet_size) {
  std::size_t per_member = 1;
  for (std::size_t l = 0; l < clone.seed.size(); ++l) per_member *= alphabet_size;
  std::size_t idx = 0;
  for (std::size_t m = clone.members.size(); m-- > 0;) idx = idx * per_member + sequence_index(clone.members[m], alphabet_size);
  return idx;
}

inline CloneStream clone_from_index(std::size_t idx, const Sequence& seed, std::size_t alphabet_size,
                                    std::size_t members) {
  std::size_t per_member = 1;
  for (std::size_t l = 0; l < seed.size(); ++l) per_member *= alphabet_size;
  CloneStream clone{seed, {}};
  for (std::size_t m = 0; m < members; ++m) {
    clone.members.push_back(sequence_from_index(idx % per_member, alphabet_size, seed.size()));
    idx /= per_member;
  }
  return clone;
}

template <CloneModel Model>
EnumeratedPosterior enumerate_posterior_exact(const Model& model, const Sequence& seed, const ConditioningSet& cond,
                                              std::size_t members, const LikelihoodParams& params,
                                              std::size_t max_states = 1'000'000) {
  const auto length = model.fixed_length();
  if (!length) fail(ErrorKind::state_space_too_large, "enumeration needs a fixed-length model");
  const std::size_t a = model.alphabet().size();
  validate(seed, model.alphabet());
  cond.validate(model.alphabet());
  if (seed.size() != *length) fail(ErrorKind::malformed_input, "seed length does not match the model");

  double log_states = static_cast<double>(*length * members) * std::log(static_cast<double>(a));
  if (log_states > std::log(static_cast<double>(max_states)) + 1e-9)
    fail(ErrorKind::state_space_too_large, "clone state space exceeds the enumeration limit");

  std::size_t per_member = 1;
  for (std::size_t l = 0; l < *length; ++l) per_member *= a;
  std::size_t total = 1;
  for (std::size_t m = 0; m < members; ++m) total *= per_member;

  std::vector<Sequence> all;
  all.reserve(per_member);
  for (std::size_t i = 0; i < per_member; ++i) all.push_back(sequence_from_index(i, a, *length));

  EnumeratedPosterior out;
  out.sequences_per_member = per_member;
  out.members = members;
  out.log_prior.assign(total, 0.0);
  std::vector<double> log_post(total, 0.0);

  // Depth-first over members so prefix states are shared.
  auto recurse = [&](auto&& self, std::size_t depth, const typename Model::State& state, double log_prior,
                     std::size_t index, std::size_t stride) -> void {
    if (depth == members) {
      std::vector<double> f(cond.size());
      for (std::size_t n = 0; n < cond.size(); ++n) f[n] = sequence_logprob(model, state, cond.sequences[n]);
      out.log_prior[index] = log_prior;
      log_post[index] = log_prior + log_likelihood_or_flat(f, cond.values, params);
      return;
    }
    for (std::size_t i = 0; i < per_member; ++i) {
      auto next = state;
      const double lp = consume_sequence(model, next, all[i]);
      self(self, depth + 1, next, log_prior + lp, index + i * stride, stride * per_member);
    }
  };
  recurse(recurse, 0, state_after(model, CloneStream{seed, {}}), 0.0, 0, 1);

  const double log_z = log_sum_exp(log_post);
  out.probs.resize(total);
  for (std::size_t i = 0; i < total; ++i) out.probs[i] = std::exp(log_post[i] - log_z);
  return out;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorKind::malformed_input, "distributions differ in support size");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace clonebo
