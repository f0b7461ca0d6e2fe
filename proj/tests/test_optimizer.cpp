#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "support/oracles.hpp"

namespace {

using namespace clonebo;

std::vector<std::pair<Sequence, double>> random_pool(Rng& rng, const Latent& latent, std::size_t n) {
  std::vector<std::pair<Sequence, double>> raw;
  std::set<Sequence> seen;
  while (raw.size() < n) {
    Sequence s = latent.sample(rng);
    if (seen.insert(s).second) raw.emplace_back(s, latent.log_prob(s));
  }
  return raw;
}

TEST(Pool, NormalizationExamples) {
  const auto pool = normalize_pool({{Sequence{0, 1}, 2.0}, {Sequence{1, 1}, 4.0}});
  EXPECT_DOUBLE_EQ(pool.start_mean(), 3.0);
  EXPECT_DOUBLE_EQ(pool.start_std(), 1.0);
  EXPECT_DOUBLE_EQ(pool.entries()[0].normalized, -1.0);
  EXPECT_DOUBLE_EQ(pool.entries()[1].normalized, 1.0);
  auto grown = pool;
  EXPECT_TRUE(grown.add(Sequence{0, 0}, 6.0));
  EXPECT_DOUBLE_EQ(grown.entries().back().normalized, 3.0);
  EXPECT_DOUBLE_EQ(grown.start_mean(), 3.0);
  EXPECT_FALSE(grown.add(Sequence{0, 0}, 7.0));
  EXPECT_EQ(grown.size(), 3u);
}

TEST(Pool, SingleEntryAndErrors) {
  const auto pool = normalize_pool({{Sequence{0, 1}, 5.0}});
  EXPECT_DOUBLE_EQ(pool.start_std(), 1.0);
  EXPECT_DOUBLE_EQ(pool.entries()[0].normalized, 0.0);
  EXPECT_THROW(normalize_pool({}), Error);
  EXPECT_THROW(normalize_pool({{Sequence{0}, std::nan("")}}), Error);
  const auto dup = normalize_pool({{Sequence{0}, 1.0}, {Sequence{0}, 9.0}, {Sequence{1}, 3.0}});
  EXPECT_EQ(dup.size(), 2u);
  EXPECT_DOUBLE_EQ(dup.entries()[0].y, 1.0);
}

TEST(Pool, TopKStableOnTies) {
  const auto pool = normalize_pool({{Sequence{0}, 1.0}, {Sequence{1}, 2.0}, {Sequence{2}, 1.0}, {Sequence{3}, 2.0}});
  EXPECT_EQ(pool.top_k(3), (std::vector<std::size_t>{1, 3, 0}));
  EXPECT_EQ(pool.top_k(10).size(), 4u);
}

TEST(ConditioningSubset, WholePoolWhenSmall) {
  const ConjugateModel m(Alphabet(3), 3, 0.5);
  const auto pool = normalize_pool({{Sequence{0, 0, 0}, 1.0}, {Sequence{1, 1, 1}, 2.0}});
  const auto sel = select_conditioning_subset(m, Sequence{0, 0, 0}, pool, 75);
  EXPECT_EQ(sel.pool_indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(sel.set.values.size(), 2u);
}

TEST(ConditioningSubset, KeepsMostRelatedAndSeed) {
  const ConjugateModel m(Alphabet(3), 4, 0.5);
  const Sequence x0{0, 1, 2, 0};
  const auto pool = normalize_pool(
      {{Sequence{2, 0, 1, 2}, 1.0}, {Sequence{0, 1, 2, 1}, 2.0}, {x0, 0.0}, {Sequence{0, 1, 2, 2}, 3.0}});
  const auto sel = select_conditioning_subset(m, x0, pool, 2);
  EXPECT_EQ(sel.pool_indices.size(), 2u);
  EXPECT_TRUE(std::find(sel.pool_indices.begin(), sel.pool_indices.end(), 2u) != sel.pool_indices.end());
  EXPECT_TRUE(std::find(sel.pool_indices.begin(), sel.pool_indices.end(), 0u) == sel.pool_indices.end());
  const auto state = state_after(m, CloneStream{x0, {}});
  EXPECT_GT(sequence_logprob(m, state, x0), sequence_logprob(m, state, Sequence{2, 0, 1, 2}));
}

TEST(ConditioningSubset, PermutationOnlyMattersAmongTies) {
  const ConjugateModel m(Alphabet(4), 6, 0.5);
  Rng rng(4);
  const Latent latent = sample_latent(m, rng);
  auto raw = random_pool(rng, latent, 30);
  const Sequence x0 = raw[0].first;
  const auto sel_a = select_conditioning_subset(m, x0, normalize_pool(raw), 10);
  std::reverse(raw.begin(), raw.end());
  const auto sel_b = select_conditioning_subset(m, x0, normalize_pool(raw), 10);
  const auto state = state_after(m, CloneStream{x0, {}});
  auto cutoff = [&](const ConditioningSelection& s) {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& x : s.set.sequences) lo = std::min(lo, sequence_logprob(m, state, x));
    return lo;
  };
  std::multiset<Sequence> a(sel_a.set.sequences.begin(), sel_a.set.sequences.end());
  std::multiset<Sequence> b(sel_b.set.sequences.begin(), sel_b.set.sequences.end());
  for (const auto& x : a)
    if (!b.contains(x)) EXPECT_EQ(sequence_logprob(m, state, x), cutoff(sel_a));
  EXPECT_EQ(a.size(), b.size());
}

class ThompsonTest : public ::testing::Test {
 protected:
  ConjugateModel model{Alphabet(4), 10, 0.5};
  Rng rng{7};
  Latent latent = sample_latent(model, rng);
};

TEST_F(ThompsonTest, ProposalWithinSubstitutionsAndMask) {
  BoConfig config;
  config.mask = {false, true, true, false, true, true, true, false, true, true};
  config.smc.record_trace = false;
  auto pool = normalize_pool(random_pool(rng, latent, 6));
  for (int t = 0; t < 10; ++t) {
    const auto p = propose_thompson(model, pool, config, rng);
    EXPECT_LE(hamming(p.sequence, p.seed), config.max_substitutions);
    for (std::size_t l = 0; l < 10; ++l)
      if (!config.allowed(l)) EXPECT_EQ(p.sequence[l], p.seed[l]);
    EXPECT_FALSE(pool.contains(p.sequence));
    bool seed_in_top = false;
    for (std::size_t i : pool.top_k(config.top_k)) seed_in_top = seed_in_top || pool.entries()[i].sequence == p.seed;
    EXPECT_TRUE(seed_in_top);
    for (const auto& path : p.climb_fitness)
      for (std::size_t k = 1; k < path.size(); ++k) EXPECT_GT(path[k], path[k - 1]);
    pool.add(p.sequence, latent.log_prob(p.sequence));
  }
}

TEST_F(ThompsonTest, ZeroSubstitutionsFallsBackToNeighbour) {
  BoConfig config;
  config.max_substitutions = 0;
  config.smc.record_trace = false;
  const auto pool = normalize_pool(random_pool(rng, latent, 3));
  const auto p = propose_thompson(model, pool, config, rng);
  EXPECT_TRUE(p.used_fallback);
  EXPECT_EQ(p.seed, pool.entries()[pool.top_k(1)[0]].sequence);
  EXPECT_EQ(hamming(p.sequence, p.seed), 1u);
}

TEST(Thompson, ExhaustedSearch) {
  const ConjugateModel m(Alphabet(2), 1, 0.5);
  const auto pool = normalize_pool({{Sequence{0}, 1.0}, {Sequence{1}, 0.0}});
  BoConfig config;
  Rng rng(1);
  EXPECT_THROW(propose_thompson(m, pool, config, rng), Error);
  config.mask = {false};
  EXPECT_THROW(propose_greedy(pool, config, 2, rng), Error);
}

TEST(Greedy, BinaryAlphabetForcesLetterAndOneSubstitution) {
  const auto pool = normalize_pool({{Sequence{0, 0, 0, 0}, 1.0}});
  BoConfig config;
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto p = propose_greedy(pool, config, 2, rng);
    EXPECT_EQ(hamming(p.sequence, p.seed), 1u);
    for (std::size_t l = 0; l < 4; ++l)
      if (p.sequence[l] != p.seed[l]) EXPECT_EQ(p.sequence[l], 1);
  }
}

TEST(Greedy, PositionsUniform) {
  const auto pool = normalize_pool({{Sequence{0, 1, 2, 3, 0, 1, 2, 3}, 0.0}});
  BoConfig config;
  Rng rng(3);
  const int n = 10000;
  std::vector<double> counts(8, 0.0);
  for (int t = 0; t < n; ++t) {
    const auto p = propose_greedy(pool, config, 4, rng);
    for (std::size_t l = 0; l < 8; ++l)
      if (p.sequence[l] != p.seed[l]) counts[l] += 1.0;
  }
  const double q = 1.0 / 8.0;
  for (double c : counts) EXPECT_NEAR(c / n, q, 3.0 * std::sqrt(q * (1 - q) / n));
}

TEST(Greedy, RetryCapExhausted) {
  const auto pool = normalize_pool({{Sequence{0}, 1.0}, {Sequence{1}, 0.0}});
  BoConfig config;
  config.retry_cap = 5;
  Rng rng(1);
  EXPECT_THROW(propose_greedy(pool, config, 2, rng), Error);
}

TEST(Genetic, ChildLettersComeFromParents) {
  Rng rng(4);
  const ConjugateModel m(Alphabet(4), 8, 0.5);
  const Latent latent = sample_latent(m, rng);
  const auto pool = normalize_pool(random_pool(rng, latent, 12));
  BoConfig config;
  for (double mut : {0.0, 0.5}) {
    config.mutation_probability = mut;
    for (int t = 0; t < 200; ++t) {
      const auto p = propose_genetic(pool, config, 4, rng);
      ASSERT_TRUE(p.second_parent);
      for (std::size_t l = 0; l < 8; ++l) {
        if (p.mutated_position && *p.mutated_position == l) continue;
        EXPECT_TRUE(p.sequence[l] == p.seed[l] || p.sequence[l] == (*p.second_parent)[l]);
      }
      if (mut == 0.0) EXPECT_FALSE(p.mutated_position);
    }
  }
}

TEST(Genetic, CopiesOfAParentAreRejected) {
  // Without mutation, equal parents reproduce a measured sequence and are
  // retried, so every returned child mixes both entries.
  const auto pool = normalize_pool({{Sequence{0, 0}, 1.0}, {Sequence{1, 1}, 0.0}});
  BoConfig config;
  config.mutation_probability = 0.0;
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto p = propose_genetic(pool, config, 2, rng);
    EXPECT_NE(p.seed, *p.second_parent);
    EXPECT_EQ(hamming(p.sequence, Sequence{0, 0}), 1u);
  }
}

TEST(Genetic, TournamentFavoursHighRanks) {
  Rng rng(6);
  const ConjugateModel m(Alphabet(4), 10, 0.5);
  const Latent latent = sample_latent(m, rng);
  const auto pool = normalize_pool(random_pool(rng, latent, 30));
  std::vector<double> rank(pool.size());
  const auto order = pool.top_k(pool.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<double>(pool.size() - r);
  std::map<Sequence, std::size_t> index;
  for (std::size_t i = 0; i < pool.size(); ++i) index[pool.entries()[i].sequence] = i;
  BoConfig config;
  double total = 0.0;
  const int draws = 1000;
  for (int t = 0; t < draws; ++t) total += rank[index.at(propose_genetic(pool, config, 4, rng).seed)];
  EXPECT_GT(total / draws, (static_cast<double>(pool.size()) + 1.0) / 2.0);
}

TEST(Genetic, SinglePoolFallsBackToGreedy) {
  const auto pool = normalize_pool({{Sequence{0, 1, 2}, 1.0}});
  Rng rng(7);
  const auto p = propose_genetic(pool, BoConfig{}, 3, rng);
  EXPECT_EQ(hamming(p.sequence, p.seed), 1u);
  EXPECT_FALSE(p.second_parent);
}

TEST(SyntheticOracle, FactorizedObjective) {
  Rng rng(8);
  const ConjugateModel m(Alphabet(4), 10, 0.5);
  const Latent latent = sample_latent(m, rng);
  const Sequence mode = latent.mode();
  const double best = synthetic_oracle(latent, mode);
  for (std::size_t l = 0; l < 10; ++l)
    for (Token x = 0; x < 4; ++x) {
      if (x == mode[l]) continue;
      Sequence s = mode;
      s[l] = x;
      EXPECT_LT(synthetic_oracle(latent, s), best);
    }
  const Sequence x = latent.sample(rng);
  double direct = 0.0;
  for (std::size_t l = 0; l < 10; ++l) direct += std::log(latent.probs[l][static_cast<std::size_t>(x[l])]);
  EXPECT_DOUBLE_EQ(synthetic_oracle(latent, x), direct);
  EXPECT_THROW(synthetic_oracle(latent, Sequence{0}), Error);
}

TEST(RunBo, BudgetOneAndInvariants) {
  Rng rng(9);
  const ConjugateModel m(Alphabet(4), 10, 0.5);
  const LatentOracle oracle(sample_latent(m, rng));
  const Sequence start = oracle.latent().sample(rng);
  BoConfig config;
  config.budget = 1;
  config.smc.record_trace = false;
  for (auto method : {Method::clonebo, Method::greedy, Method::genetic}) {
    Rng r(1);
    const auto t = run_bo(m, oracle, {{start, oracle(start)}}, method, config, r);
    ASSERT_EQ(t.steps.size(), 1u);
    EXPECT_EQ(t.steps[0].y, oracle(t.steps[0].proposed));
  }
  config.budget = 15;
  Rng r1(2), r2(2);
  const auto a = run_bo(m, oracle, {{start, oracle(start)}}, Method::clonebo, config, r1);
  const auto b = run_bo(m, oracle, {{start, oracle(start)}}, Method::clonebo, config, r2);
  ASSERT_EQ(a.steps.size(), 15u);
  double best = a.initial_best;
  std::set<Sequence> seen{start};
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    EXPECT_GE(a.steps[k].best_so_far, best);
    best = a.steps[k].best_so_far;
    EXPECT_TRUE(seen.insert(a.steps[k].proposed).second);
    EXPECT_EQ(a.steps[k].proposed, b.steps[k].proposed);
    EXPECT_EQ(a.steps[k].elapsed_ms, 0.0);
  }
  config.budget = 0;
  EXPECT_THROW(run_bo(m, oracle, {{start, 0.0}}, Method::greedy, config, r1), Error);
}

TEST(RunBo, ExhaustionTruncatesTrajectory) {
  const ConjugateModel m(Alphabet(2), 2, 0.5);
  const TableOracle oracle({{Sequence{0, 0}, 0.0}, {Sequence{0, 1}, 1.0}, {Sequence{1, 0}, 2.0}, {Sequence{1, 1}, 3.0}});
  BoConfig config;
  config.budget = 10;
  config.retry_cap = 200;
  Rng rng(3);
  const auto t = run_bo(m, oracle, {{Sequence{0, 0}, 0.0}}, Method::greedy, config, rng);
  EXPECT_EQ(t.steps.size(), 3u);
  EXPECT_TRUE(t.truncated_reason);
  EXPECT_EQ(t.steps.back().best_so_far, 3.0);
  EXPECT_THROW(oracle(Sequence{1, 1, 1}), Error);
}

TEST(Method, ParseAndPrint) {
  for (auto m : {Method::clonebo, Method::greedy, Method::genetic}) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("random"), Error);
}

}  // namespace
