#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "clonebo/clone_model.hpp"

namespace clonebo {

// Exchangeable fixed-length clone model: every position carries a latent
// categorical with a Dirichlet(alpha_l) prior, and sequences in a clone are
// iid given the latent. Predictives are Dirichlet-categorical in closed form.
class ConjugateModel {
 public:
  struct State {
    std::vector<double> counts;  // length * A letter counts, completed and partial
    std::size_t completed = 0;
    std::size_t position = 0;
  };

  ConjugateModel(Alphabet alphabet, std::size_t length, std::span<const double> alpha)
      : ConjugateModel(alphabet, length,
                       std::vector<std::vector<double>>(length,
                                                        std::vector<double>(alpha.begin(), alpha.end()))) {}

  ConjugateModel(Alphabet alphabet, std::size_t length, double alpha)
      : ConjugateModel(alphabet, length, std::vector<double>(alphabet.size(), alpha)) {}

  ConjugateModel(Alphabet alphabet, std::size_t length,
                 const std::vector<std::vector<double>>& alpha_per_position)
      : alphabet_(std::move(alphabet)), length_(length) {
    if (length_ == 0) fail(ErrorKind::config, "conjugate model length must be positive");
    if (alpha_per_position.size() != length_)
      fail(ErrorKind::config, "need one concentration vector per position");
    const std::size_t a = alphabet_.size();
    alpha_.reserve(length_ * a);
    alpha_sum_.assign(length_, 0.0);
    for (std::size_t l = 0; l < length_; ++l) {
      if (alpha_per_position[l].size() != a)
        fail(ErrorKind::config, "concentration vector must have one entry per letter");
      for (double v : alpha_per_position[l]) {
        if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::config, "concentrations must be positive");
        alpha_.push_back(v);
        alpha_sum_[l] += v;
      }
    }
  }

  const Alphabet& alphabet() const noexcept { return alphabet_; }
  std::optional<std::size_t> fixed_length() const noexcept { return length_; }
  std::size_t length() const noexcept { return length_; }
  double alpha(std::size_t position, Token letter) const {
    return alpha_[position * alphabet_.size() + static_cast<std::size_t>(letter)];
  }
  std::span<const double> alpha_at(std::size_t position) const {
    return {alpha_.data() + position * alphabet_.size(), alphabet_.size()};
  }

  State initial_state() const { return State{std::vector<double>(length_ * alphabet_.size(), 0.0), 0, 0}; }

  static std::size_t position(const State& s) noexcept { return s.position; }

  void next_token_logprobs(const State& s, std::span<double> out) const {
    const std::size_t a = alphabet_.size();
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    if (s.position == length_) {
      for (std::size_t x = 0; x < a; ++x) out[x] = neg_inf;
      out[a] = 0.0;
      return;
    }
    const std::size_t base = s.position * a;
    const double log_denominator = std::log(static_cast<double>(s.completed) + alpha_sum_[s.position]);
    for (std::size_t x = 0; x < a; ++x) out[x] = std::log(s.counts[base + x] + alpha_[base + x]) - log_denominator;
    out[a] = neg_inf;
  }

  void advance(State& s, Token t) const {
    if (t == alphabet_.separator()) {
      if (s.position != length_)
        fail(ErrorKind::malformed_input, "separator before the end of a fixed-length sequence");
      ++s.completed;
      s.position = 0;
      return;
    }
    if (!alphabet_.is_letter(t)) fail(ErrorKind::malformed_input, "token outside alphabet");
    if (s.position == length_)
      fail(ErrorKind::malformed_input, "letter past the end of a fixed-length sequence");
    s.counts[s.position * alphabet_.size() + static_cast<std::size_t>(t)] += 1.0;
    ++s.position;
  }

 private:
  Alphabet alphabet_;
  std::size_t length_;
  std::vector<double> alpha_;
  std::vector<double> alpha_sum_;
};

static_assert(CloneModel<ConjugateModel>);

}  // namespace clonebo
