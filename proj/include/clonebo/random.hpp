#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "clonebo/error.hpp"

namespace clonebo {

// The engine is the standard Mersenne twister; every draw is derived from it
// with the portable helpers below rather than std::*_distribution so streams
// are identical across standard library implementations.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic sub-seed for stream `stream` of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return static_cast<std::size_t>(draw % bound);
}

// Counter-based stream: the k-th draw depends only on (key, k), so a particle
// gets the same randomness regardless of the order particles are advanced in.
class CounterStream {
 public:
  CounterStream() = default;
  explicit CounterStream(std::uint64_t key) : key_(splitmix64(key)) {}

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Inverse-CDF draw from unnormalized log-probabilities.
inline std::size_t sample_from_log(double u, std::span<const double> log_probs) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : log_probs) max = std::max(max, v);
  if (!std::isfinite(max)) fail(ErrorKind::degenerate_context, "all candidates have zero probability");
  double total = 0.0;
  for (double v : log_probs) total += std::exp(v - max);
  const double target = u * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    const double p = std::exp(log_probs[i] - max);
    if (p <= 0.0) continue;
    acc += p;
    last = i;
    if (target < acc) return i;
  }
  return last;
}

inline std::size_t sample_from_log(Rng& rng, std::span<const double> log_probs) {
  return sample_from_log(uniform01(rng), log_probs);
}

inline double sample_gamma(Rng& rng, double shape) {
  std::gamma_distribution<double> gamma(shape, 1.0);
  return gamma(rng);
}

inline std::vector<double> sample_dirichlet(Rng& rng, std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = std::max(sample_gamma(rng, alpha[i]), std::numeric_limits<double>::min());
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline double log_sum_exp(std::span<const double> values) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : values) max = std::max(max, v);
  if (!std::isfinite(max)) return max;
  double total = 0.0;
  for (double v : values) total += std::exp(v - max);
  return max + std::log(total);
}

}  // namespace clonebo
