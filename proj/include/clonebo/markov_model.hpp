#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "clonebo/clone_model.hpp"

namespace clonebo {

inline constexpr std::size_t kMaxMarkovOrder = 8;

// Order-k token model over letters and separator with additive smoothing.
// The k-token context before the start of a stream is padded with
// separators. A separator directly after a separator would encode an empty
// sequence, so at the first position of a member it is given probability 0
// and the letters are renormalized.
class MarkovModel {
 public:
  struct State {
    std::vector<Token> history;  // most recent token last
    std::size_t position = 0;
  };

  MarkovModel(Alphabet alphabet, std::size_t order, double lambda)
      : alphabet_(std::move(alphabet)), order_(order), lambda_(lambda) {
    if (order_ > kMaxMarkovOrder)
      fail(ErrorKind::config, "markov order " + std::to_string(order_) + " exceeds the bound " +
                                  std::to_string(kMaxMarkovOrder));
    if (!(lambda_ > 0.0) || !std::isfinite(lambda_))
      fail(ErrorKind::config, "smoothing pseudocount must be positive");
  }

  const Alphabet& alphabet() const noexcept { return alphabet_; }
  std::optional<std::size_t> fixed_length() const noexcept { return std::nullopt; }
  std::size_t order() const noexcept { return order_; }
  double lambda() const noexcept { return lambda_; }
  const std::map<std::vector<Token>, std::vector<double>>& counts() const noexcept { return counts_; }

  State initial_state() const { return State{std::vector<Token>(order_, alphabet_.separator()), 0}; }

  static std::size_t position(const State& s) noexcept { return s.position; }

  void next_token_logprobs(const State& s, std::span<double> out) const {
    const std::size_t v = alphabet_.token_count();
    const auto it = counts_.find(s.history);
    const bool block_separator = s.position == 0;
    const std::size_t support = block_separator ? v - 1 : v;
    double total = lambda_ * static_cast<double>(support);
    if (it != counts_.end()) {
      for (std::size_t x = 0; x < support; ++x) total += it->second[x];
    }
    const double log_total = std::log(total);
    for (std::size_t x = 0; x < v; ++x) {
      const double c = it != counts_.end() ? it->second[x] : 0.0;
      out[x] = std::log(c + lambda_) - log_total;
    }
    if (block_separator) out[v - 1] = -std::numeric_limits<double>::infinity();
  }

  void advance(State& s, Token t) const {
    if (t == alphabet_.separator()) {
      if (s.position == 0) fail(ErrorKind::malformed_input, "empty sequence in clone stream");
      s.position = 0;
    } else if (alphabet_.is_letter(t)) {
      ++s.position;
    } else {
      fail(ErrorKind::malformed_input, "token outside alphabet");
    }
    if (order_ > 0) {
      s.history.erase(s.history.begin());
      s.history.push_back(t);
    }
  }

  void add_count(const std::vector<Token>& context, Token next, double count = 1.0) {
    if (context.size() != order_) fail(ErrorKind::config, "context length must equal the order");
    auto& row = counts_[context];
    if (row.empty()) row.assign(alphabet_.token_count(), 0.0);
    row[static_cast<std::size_t>(next)] += count;
  }

  void observe(const CloneStream& stream) {
    auto state = initial_state();
    for (Token t : encode(stream, alphabet_)) {
      add_count(state.history, t);
      advance(state, t);
    }
  }

 private:
  Alphabet alphabet_;
  std::size_t order_;
  double lambda_;
  std::map<std::vector<Token>, std::vector<double>> counts_;
};

static_assert(CloneModel<MarkovModel>);

inline MarkovModel fit_markov(std::span<const CloneStream> corpus, const Alphabet& alphabet,
                              std::size_t order, double lambda) {
  if (corpus.empty()) fail(ErrorKind::insufficient_data, "cannot fit a markov model to an empty corpus");
  MarkovModel model(alphabet, order, lambda);
  for (const auto& stream : corpus) model.observe(stream);
  return model;
}

}  // namespace clonebo
