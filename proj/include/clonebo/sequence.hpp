#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clonebo/error.hpp"

namespace clonebo {

using Token = std::int32_t;

// Letters are 0..size-1; the separator is `size`. An optional letter map lets
// sequences be written as one character per letter instead of integer ids.
class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::size_t size, std::string letters = {})
      : size_(size), letters_(std::move(letters)) {
    if (size_ < 2) fail(ErrorKind::config, "alphabet size must be at least 2");
    if (!letters_.empty() && letters_.size() != size_)
      fail(ErrorKind::config, "alphabet letter map must have exactly `size` characters");
  }

  std::size_t size() const noexcept { return size_; }
  // Letters plus the separator.
  std::size_t token_count() const noexcept { return size_ + 1; }
  Token separator() const noexcept { return static_cast<Token>(size_); }
  bool is_letter(Token t) const noexcept { return t >= 0 && static_cast<std::size_t>(t) < size_; }
  bool has_letter_map() const noexcept { return !letters_.empty(); }
  const std::string& letters() const noexcept { return letters_; }

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  std::size_t size_ = 2;
  std::string letters_;
};

struct Sequence {
  std::vector<Token> tokens;

  Sequence() = default;
  explicit Sequence(std::vector<Token> t) : tokens(std::move(t)) {}
  Sequence(std::initializer_list<Token> t) : tokens(t) {}

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  Token operator[](std::size_t i) const { return tokens[i]; }
  Token& operator[](std::size_t i) { return tokens[i]; }
  auto begin() const { return tokens.begin(); }
  auto end() const { return tokens.end(); }

  friend bool operator==(const Sequence&, const Sequence&) = default;
  friend auto operator<=>(const Sequence&, const Sequence&) = default;
};

struct SequenceHash {
  std::size_t operator()(const Sequence& s) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (Token t : s.tokens) {
      h ^= static_cast<std::size_t>(t) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

inline void validate(const Sequence& s, const Alphabet& alphabet, std::size_t max_len = 0) {
  if (s.empty()) fail(ErrorKind::malformed_input, "sequence is empty");
  if (max_len != 0 && s.size() > max_len)
    fail(ErrorKind::malformed_input, "sequence longer than max_len");
  for (Token t : s.tokens) {
    if (!alphabet.is_letter(t))
      fail(ErrorKind::malformed_input, "token " + std::to_string(t) + " is not a letter");
  }
}

inline std::size_t hamming(const Sequence& a, const Sequence& b) {
  if (a.size() != b.size()) fail(ErrorKind::malformed_input, "hamming distance needs equal lengths");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

// A clonal family: the seed X0 followed by members X1..XM.
struct CloneStream {
  Sequence seed;
  std::vector<Sequence> members;

  std::size_t member_count() const noexcept { return members.size(); }

  friend bool operator==(const CloneStream&, const CloneStream&) = default;
  friend auto operator<=>(const CloneStream&, const CloneStream&) = default;
};

// seed | sep | X1 | sep | ... | XM | sep
inline std::vector<Token> encode(const CloneStream& stream, const Alphabet& alphabet) {
  std::vector<Token> flat;
  auto push = [&](const Sequence& s) {
    flat.insert(flat.end(), s.tokens.begin(), s.tokens.end());
    flat.push_back(alphabet.separator());
  };
  push(stream.seed);
  for (const auto& m : stream.members) push(m);
  return flat;
}

inline CloneStream decode(std::span<const Token> flat, const Alphabet& alphabet) {
  std::vector<Sequence> sequences;
  Sequence current;
  for (Token t : flat) {
    if (t == alphabet.separator()) {
      if (current.empty()) fail(ErrorKind::malformed_input, "empty sequence in clone stream");
      sequences.push_back(std::move(current));
      current = Sequence{};
    } else if (alphabet.is_letter(t)) {
      current.tokens.push_back(t);
    } else {
      fail(ErrorKind::malformed_input, "token " + std::to_string(t) + " outside alphabet");
    }
  }
  if (!current.empty()) fail(ErrorKind::malformed_input, "clone stream does not end with a separator");
  if (sequences.empty()) fail(ErrorKind::malformed_input, "clone stream has no seed");
  CloneStream out;
  out.seed = std::move(sequences.front());
  out.members.assign(std::make_move_iterator(sequences.begin() + 1),
                     std::make_move_iterator(sequences.end()));
  return out;
}

}  // namespace clonebo
