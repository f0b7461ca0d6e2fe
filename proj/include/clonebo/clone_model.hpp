#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "clonebo/random.hpp"
#include "clonebo/sequence.hpp"

namespace clonebo {

// An autoregressive model over flat clone streams. A State summarizes a
// prefix; `advance` consumes one token and throws malformed_input when the
// token cannot follow the prefix. States are plain values so particles can
// copy them when they are resampled.
template <class M>
concept CloneModel = requires(const M& model, typename M::State& state,
                              const typename M::State& cstate, std::span<double> out,
                              Token token) {
  typename M::State;
  { model.alphabet() } -> std::convertible_to<Alphabet>;
  { model.fixed_length() } -> std::same_as<std::optional<std::size_t>>;
  { model.initial_state() } -> std::same_as<typename M::State>;
  { model.next_token_logprobs(cstate, out) };
  { model.advance(state, token) };
  { M::position(cstate) } -> std::same_as<std::size_t>;
};

template <CloneModel M>
std::vector<double> next_token_logprobs(const M& model, const typename M::State& state) {
  std::vector<double> out(model.alphabet().token_count());
  model.next_token_logprobs(state, out);
  return out;
}

template <CloneModel M>
typename M::State state_after(const M& model, std::span<const Token> context) {
  auto state = model.initial_state();
  for (Token t : context) model.advance(state, t);
  return state;
}

template <CloneModel M>
typename M::State state_after(const M& model, const CloneStream& context) {
  const auto flat = encode(context, model.alphabet());
  return state_after(model, std::span<const Token>(flat));
}

// Log-probability vector over the A letters and the separator following a
// flat-encoded prefix.
template <CloneModel M>
std::vector<double> next_token_logprobs(const M& model, std::span<const Token> context) {
  return next_token_logprobs(model, state_after(model, context));
}

// log p(X followed by a separator | state). Advances `state` past X.
template <CloneModel M>
double consume_sequence(const M& model, typename M::State& state, const Sequence& x) {
  const Alphabet alphabet = model.alphabet();
  std::vector<double> lp(alphabet.token_count());
  double total = 0.0;
  auto step = [&](Token t) {
    model.next_token_logprobs(state, lp);
    total += lp[static_cast<std::size_t>(t)];
    model.advance(state, t);
  };
  for (Token t : x.tokens) {
    if (!alphabet.is_letter(t)) fail(ErrorKind::malformed_input, "sequence token outside alphabet");
    step(t);
  }
  step(alphabet.separator());
  return total;
}

template <CloneModel M>
double sequence_logprob(const M& model, typename M::State state, const Sequence& x) {
  return consume_sequence(model, state, x);
}

// log p(X as the next member | context).
template <CloneModel M>
double sequence_logprob(const M& model, const CloneStream& context, const Sequence& x) {
  return sequence_logprob(model, state_after(model, context), x);
}

struct SampleDiagnostics {
  std::size_t truncated_members = 0;
};

inline std::size_t default_max_len(const Sequence& seed) { return 2 * seed.size(); }

// Ancestral sampling of M members following the seed. In variable-length mode
// a member that reaches max_len without a separator is closed off and counted
// as truncated.
template <CloneModel M>
CloneStream sample_clone(const M& model, const Sequence& seed, std::size_t members, Rng& rng,
                         std::size_t max_len = 0, SampleDiagnostics* diagnostics = nullptr) {
  const Alphabet alphabet = model.alphabet();
  validate(seed, alphabet);
  if (max_len == 0) max_len = default_max_len(seed);
  CloneStream out{seed, {}};
  auto state = state_after(model, out);
  std::vector<double> lp(alphabet.token_count());
  for (std::size_t m = 0; m < members; ++m) {
    Sequence member;
    while (true) {
      if (member.size() >= max_len) {
        if (diagnostics) ++diagnostics->truncated_members;
        model.advance(state, alphabet.separator());
        break;
      }
      model.next_token_logprobs(state, lp);
      const auto t = static_cast<Token>(sample_from_log(rng, lp));
      model.advance(state, t);
      if (t == alphabet.separator()) break;
      member.tokens.push_back(t);
    }
    out.members.push_back(std::move(member));
  }
  return out;
}

// Per-token perplexity of flat-encoded streams, separators included.
template <CloneModel M>
double perplexity(const M& model, std::span<const CloneStream> corpus) {
  double nll = 0.0;
  std::size_t count = 0;
  std::vector<double> lp(model.alphabet().token_count());
  for (const auto& stream : corpus) {
    auto state = model.initial_state();
    for (Token t : encode(stream, model.alphabet())) {
      model.next_token_logprobs(state, lp);
      nll -= lp[static_cast<std::size_t>(t)];
      model.advance(state, t);
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::insufficient_data, "perplexity of an empty corpus");
  return std::exp(nll / static_cast<double>(count));
}

}  // namespace clonebo
