#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "clonebo/conjugate_model.hpp"
#include "clonebo/markov_model.hpp"
#include "clonebo/optimizer.hpp"
#include "clonebo/synthetic.hpp"
#include "clonebo/twisted_smc.hpp"

namespace clonebo {

using json = nlohmann::json;

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a temporary file and rename so readers never see partial output.
inline void write_text(const std::filesystem::path& path, std::string_view text, bool overwrite = true) {
  if (!overwrite && std::filesystem::exists(path))
    fail(ErrorKind::io, "'" + path.string() + "' exists; pass --force to overwrite");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + tmp.string() + "' for writing");
    out << text;
    if (!out) fail(ErrorKind::io, "write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

// Sequences are written as one character per letter when the alphabet has a
// letter map, otherwise as space-separated integer ids.
inline std::string format_sequence(const Sequence& s, const Alphabet& alphabet) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (alphabet.has_letter_map()) {
      out.push_back(alphabet.letters()[static_cast<std::size_t>(s[i])]);
    } else {
      if (i) out.push_back(' ');
      out += std::to_string(s[i]);
    }
  }
  return out;
}

inline Sequence parse_sequence(std::string_view text, const Alphabet& alphabet, const std::string& file = "<input>",
                               std::size_t line = 1, std::size_t column_offset = 0) {
  Sequence s;
  if (alphabet.has_letter_map()) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char c = text[i];
      if (c == ' ' || c == '\t') continue;
      const auto pos = alphabet.letters().find(c);
      if (pos == std::string::npos)
        throw ParseError(file, line, column_offset + i + 1, std::string("unknown letter '") + c + "'");
      s.tokens.push_back(static_cast<Token>(pos));
    }
  } else {
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == ' ' || text[i] == '\t') {
        ++i;
        continue;
      }
      Token value = 0;
      const auto res = std::from_chars(text.data() + i, text.data() + text.size(), value);
      if (res.ec != std::errc() || (res.ptr != text.data() + text.size() && *res.ptr != ' ' && *res.ptr != '\t'))
        throw ParseError(file, line, column_offset + i + 1, "expected an integer letter id");
      if (!alphabet.is_letter(value))
        throw ParseError(file, line, column_offset + i + 1, "letter id " + std::to_string(value) + " outside alphabet");
      s.tokens.push_back(value);
      i = static_cast<std::size_t>(res.ptr - text.data());
    }
  }
  if (s.empty()) throw ParseError(file, line, column_offset + 1, "empty sequence");
  return s;
}

inline std::string format_sequence_file(std::span<const Sequence> seqs, const Alphabet& alphabet) {
  std::string out;
  for (const auto& s : seqs) out += format_sequence(s, alphabet) + "\n";
  return out;
}

inline std::vector<Sequence> parse_sequence_file(std::string_view text, const Alphabet& alphabet,
                                                 const std::string& file = "<input>") {
  std::vector<Sequence> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string_view::npos) continue;
    out.push_back(parse_sequence(lines[i], alphabet, file, i + 1));
  }
  return out;
}

// Corpus: one family per block, seed first, blocks separated by blank lines.
inline std::string format_corpus(std::span<const CloneStream> corpus, const Alphabet& alphabet) {
  std::string out;
  for (std::size_t f = 0; f < corpus.size(); ++f) {
    if (f) out += "\n";
    out += format_sequence(corpus[f].seed, alphabet) + "\n";
    for (const auto& m : corpus[f].members) out += format_sequence(m, alphabet) + "\n";
  }
  return out;
}

inline std::vector<CloneStream> parse_corpus(std::string_view text, const Alphabet& alphabet,
                                             const std::string& file = "<input>") {
  std::vector<CloneStream> out;
  std::optional<CloneStream> current;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string_view::npos) {
      if (current) out.push_back(std::move(*current));
      current.reset();
      continue;
    }
    Sequence s = parse_sequence(lines[i], alphabet, file, i + 1);
    if (!current) {
      current = CloneStream{std::move(s), {}};
    } else {
      current->members.push_back(std::move(s));
    }
  }
  if (current) out.push_back(std::move(*current));
  return out;
}

inline json alphabet_to_json(const Alphabet& a) {
  json j{{"size", a.size()}};
  if (a.has_letter_map()) j["letters"] = a.letters();
  return j;
}

inline Alphabet alphabet_from_json(const json& j) {
  if (!j.is_object() || !j.contains("size")) fail(ErrorKind::config, "alphabet: missing key 'size'");
  return Alphabet(j.at("size").get<std::size_t>(), j.value("letters", std::string{}));
}

inline json latents_to_json(std::span<const Latent> latents) {
  json arr = json::array();
  for (const auto& l : latents) arr.push_back(json{{"probs", l.probs}});
  return json{{"format", "clonebo-latents"}, {"version", 1}, {"families", arr}};
}

inline std::vector<Latent> latents_from_json(const json& j) {
  if (j.value("format", std::string{}) != "clonebo-latents")
    fail(ErrorKind::config, "latents: unexpected format tag");
  std::vector<Latent> out;
  for (const auto& f : j.at("families")) out.push_back(Latent{f.at("probs").get<std::vector<std::vector<double>>>()});
  return out;
}

using AnyModel = std::variant<ConjugateModel, MarkovModel>;

inline constexpr int kModelFormatVersion = 1;

inline json model_to_json(const ConjugateModel& m) {
  std::vector<std::vector<double>> alpha;
  for (std::size_t l = 0; l < m.length(); ++l) alpha.emplace_back(m.alpha_at(l).begin(), m.alpha_at(l).end());
  return json{{"format", "clonebo-model"},
              {"version", kModelFormatVersion},
              {"kind", "conjugate"},
              {"alphabet", alphabet_to_json(m.alphabet())},
              {"length", m.length()},
              {"alpha", alpha}};
}

inline json model_to_json(const MarkovModel& m) {
  json table = json::array();
  for (const auto& [ctx, counts] : m.counts()) table.push_back(json{{"context", ctx}, {"counts", counts}});
  return json{{"format", "clonebo-model"},
              {"version", kModelFormatVersion},
              {"kind", "markov"},
              {"alphabet", alphabet_to_json(m.alphabet())},
              {"order", m.order()},
              {"lambda", m.lambda()},
              {"counts", table}};
}

inline json model_to_json(const AnyModel& m) {
  return std::visit([](const auto& x) { return model_to_json(x); }, m);
}

// Accepts a full model file or a compact inline form:
//   {"kind": "conjugate", "length": L, "alpha": 0.5 | [..A..] | [[..A..] x L]}
inline AnyModel model_from_json(const json& j, std::optional<Alphabet> alphabet_hint = std::nullopt) {
  if (j.contains("format") && j.at("format") != "clonebo-model") fail(ErrorKind::config, "model: unexpected format tag");
  if (j.contains("version") && j.at("version").get<int>() != kModelFormatVersion)
    fail(ErrorKind::config, "model: unsupported version");
  if (!j.contains("kind")) fail(ErrorKind::config, "model: missing key 'kind'");
  Alphabet alphabet;
  if (j.contains("alphabet")) {
    alphabet = alphabet_from_json(j.at("alphabet"));
  } else if (alphabet_hint) {
    alphabet = *alphabet_hint;
  } else {
    fail(ErrorKind::config, "model: missing key 'alphabet'");
  }
  const std::string kind = j.at("kind");
  if (kind == "conjugate") {
    if (!j.contains("length")) fail(ErrorKind::config, "model: missing key 'length'");
    const auto length = j.at("length").get<std::size_t>();
    const json& a = j.contains("alpha") ? j.at("alpha") : json(0.5);
    if (a.is_number()) return ConjugateModel(alphabet, length, a.get<double>());
    if (a.is_array() && !a.empty() && a.front().is_array())
      return ConjugateModel(alphabet, length, a.get<std::vector<std::vector<double>>>());
    return ConjugateModel(alphabet, length, std::span<const double>(a.get<std::vector<double>>()));
  }
  if (kind == "markov") {
    MarkovModel m(alphabet, j.value("order", std::size_t{1}), j.value("lambda", 1.0));
    if (j.contains("counts")) {
      for (const auto& row : j.at("counts")) {
        const auto ctx = row.at("context").get<std::vector<Token>>();
        const auto counts = row.at("counts").get<std::vector<double>>();
        if (counts.size() != alphabet.token_count()) fail(ErrorKind::config, "model: count row has wrong width");
        for (std::size_t x = 0; x < counts.size(); ++x)
          if (counts[x] != 0.0) m.add_count(ctx, static_cast<Token>(x), counts[x]);
      }
    }
    return m;
  }
  fail(ErrorKind::config, "model: unknown kind '" + kind + "'");
}

inline json parse_json(std::string_view text, const std::string& file) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line/column
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(file, line, col, e.what());
  }
}

// Pool CSV: header `sequence,y`.
inline std::vector<std::pair<Sequence, double>> parse_pool_csv(std::string_view text, const Alphabet& alphabet,
                                                               const std::string& file = "<input>") {
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != "sequence,y") throw ParseError(file, 1, 1, "expected header 'sequence,y'");
  std::vector<std::pair<Sequence, double>> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string_view::npos) throw ParseError(file, i + 1, 1, "expected 'sequence,y'");
    Sequence s = parse_sequence(line.substr(0, comma), alphabet, file, i + 1);
    const auto field = line.substr(comma + 1);
    double y = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), y);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(y))
      throw ParseError(file, i + 1, comma + 2, "expected a finite number");
    out.emplace_back(std::move(s), y);
  }
  return out;
}

inline std::string format_pool_csv(std::span<const std::pair<Sequence, double>> pool, const Alphabet& alphabet) {
  std::string out = "sequence,y\n";
  for (const auto& [s, y] : pool) out += format_sequence(s, alphabet) + "," + format_double(y) + "\n";
  return out;
}

inline std::string format_smc_trace_csv(const SmcDiagnostics& d) {
  std::string out = "step,member,letter,particle,ess,resampled,log_weight,log_lik\n";
  for (const auto& r : d.trace) {
    out += std::to_string(r.step) + "," + std::to_string(r.member) + "," + std::to_string(r.letter) + "," +
           std::to_string(r.particle) + "," + format_double(r.ess) + "," + (r.resampled ? "1" : "0") + "," +
           format_double(r.log_weight) + "," + format_double(r.log_lik) + "\n";
  }
  return out;
}

inline constexpr std::string_view kTrajectoryHeader = "step,method,replicate,proposed,y,best_so_far,elapsed_ms";

inline std::string format_trajectory_csv(const Trajectory& t, std::size_t replicate, const Alphabet& alphabet,
                                         bool with_header = true) {
  std::string out;
  if (with_header) out += std::string(kTrajectoryHeader) + "\n";
  for (const auto& s : t.steps) {
    out += std::to_string(s.step) + "," + std::string(to_string(t.method)) + "," + std::to_string(replicate) + "," +
           format_sequence(s.proposed, alphabet) + "," + format_double(s.y) + "," + format_double(s.best_so_far) +
           "," + format_double(s.elapsed_ms) + "\n";
  }
  return out;
}

struct TrajectoryRow {
  std::size_t step = 0;
  std::string method;
  std::size_t replicate = 0;
  Sequence proposed;
  double y = 0.0;
  double best_so_far = 0.0;
  double elapsed_ms = 0.0;
};

inline std::vector<TrajectoryRow> parse_trajectory_csv(std::string_view text, const Alphabet& alphabet,
                                                       const std::string& file = "<input>") {
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != kTrajectoryHeader)
    throw ParseError(file, 1, 1, "expected header '" + std::string(kTrajectoryHeader) + "'");
  std::vector<TrajectoryRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto c = lines[i].find(',', start);
      fields.push_back(lines[i].substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
      if (c == std::string_view::npos) break;
      start = c + 1;
    }
    if (fields.size() != 7) throw ParseError(file, i + 1, 1, "expected 7 fields");
    auto number = [&](std::string_view f, auto& v) {
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw ParseError(file, i + 1, static_cast<std::size_t>(f.data() - lines[i].data()) + 1, "expected a number");
    };
    TrajectoryRow row;
    number(fields[0], row.step);
    row.method = std::string(fields[1]);
    number(fields[2], row.replicate);
    row.proposed = parse_sequence(fields[3], alphabet, file, i + 1, static_cast<std::size_t>(fields[3].data() - lines[i].data()));
    number(fields[4], row.y);
    number(fields[5], row.best_so_far);
    number(fields[6], row.elapsed_ms);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace clonebo
