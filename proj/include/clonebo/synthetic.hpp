#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "clonebo/conjugate_model.hpp"
#include "clonebo/random.hpp"

namespace clonebo {

// Hidden per-position categorical distributions of one clonal family.
struct Latent {
  std::vector<std::vector<double>> probs;  // [position][letter]

  std::size_t length() const noexcept { return probs.size(); }

  double log_prob(const Sequence& x) const {
    if (x.size() != probs.size()) fail(ErrorKind::malformed_input, "sequence length does not match latent");
    double total = 0.0;
    for (std::size_t l = 0; l < x.size(); ++l) {
      const auto& row = probs[l];
      if (x[l] < 0 || static_cast<std::size_t>(x[l]) >= row.size())
        fail(ErrorKind::malformed_input, "token outside alphabet");
      total += std::log(row[static_cast<std::size_t>(x[l])]);
    }
    return total;
  }

  Sequence sample(Rng& rng) const {
    Sequence out;
    out.tokens.reserve(probs.size());
    for (const auto& row : probs) {
      const double u = uniform01(rng);
      double acc = 0.0;
      std::size_t pick = row.size() - 1;
      for (std::size_t x = 0; x < row.size(); ++x) {
        acc += row[x];
        if (u < acc) {
          pick = x;
          break;
        }
      }
      out.tokens.push_back(static_cast<Token>(pick));
    }
    return out;
  }

  // Per-position most likely letter; first index wins ties.
  Sequence mode() const {
    Sequence out;
    for (const auto& row : probs) {
      std::size_t best = 0;
      for (std::size_t x = 1; x < row.size(); ++x)
        if (row[x] > row[best]) best = x;
      out.tokens.push_back(static_cast<Token>(best));
    }
    return out;
  }
};

inline Latent sample_latent(const ConjugateModel& prior, Rng& rng) {
  Latent latent;
  latent.probs.reserve(prior.length());
  for (std::size_t l = 0; l < prior.length(); ++l) latent.probs.push_back(sample_dirichlet(rng, prior.alpha_at(l)));
  return latent;
}

struct SyntheticCorpus {
  std::vector<CloneStream> families;
  std::vector<Latent> latents;
};

// Each family draws its latent from the Dirichlet prior, then the seed and
// `members_per_family` members iid from that latent.
inline SyntheticCorpus gen_synthetic_families(const ConjugateModel& prior, std::size_t n_families,
                                              std::size_t members_per_family, Rng& rng) {
  SyntheticCorpus corpus;
  corpus.families.reserve(n_families);
  corpus.latents.reserve(n_families);
  for (std::size_t f = 0; f < n_families; ++f) {
    Latent latent = sample_latent(prior, rng);
    CloneStream family;
    family.seed = latent.sample(rng);
    for (std::size_t m = 0; m < members_per_family; ++m) family.members.push_back(latent.sample(rng));
    corpus.families.push_back(std::move(family));
    corpus.latents.push_back(std::move(latent));
  }
  return corpus;
}

}  // namespace clonebo
