// Command-line front end. Exit codes: 0 success, 2 usage or config errors,
// 1 runtime errors. Failures print one JSON object on stderr.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clonebo/clonebo.hpp"

namespace {

using namespace clonebo;

int report(int code, std::string_view kind, std::string_view message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = path.empty() ? json::object() : parse_json(read_text(path), path);
  for (const auto& o : overrides) apply_override(j, o);
  return j;
}

std::filesystem::path config_dir(const std::string& path) {
  if (path.empty()) return ".";
  const auto parent = std::filesystem::path(path).parent_path();
  return parent.empty() ? std::filesystem::path(".") : parent;
}

AnyModel load_model_file(const std::string& path) { return model_from_json(parse_json(read_text(path), path)); }

const Alphabet& model_alphabet(const AnyModel& m) {
  return std::visit([](const auto& x) -> const Alphabet& { return x.alphabet(); }, m);
}

// gen-data config keys: alphabet, length, alpha, families, members, seed, corpus, latents.
void gen_data(const json& j, bool force) {
  detail::check_keys(j, "", {"alphabet", "length", "alpha", "families", "members", "seed", "corpus", "latents"});
  const Alphabet alphabet = j.contains("alphabet") ? alphabet_from_json(j.at("alphabet")) : Alphabet(4);
  const auto length = detail::get_key<std::size_t>(j, "length", "");
  const auto families = j.value("families", std::size_t{10});
  const auto members = j.value("members", std::size_t{10});
  const auto seed = j.value("seed", std::uint64_t{0});
  const std::string corpus_path = j.value("corpus", std::string("corpus.txt"));
  const std::string latents_path = j.value("latents", std::string("latents.json"));
  const json& a = j.contains("alpha") ? j.at("alpha") : json(0.5);
  const ConjugateModel prior = a.is_number()
                                   ? ConjugateModel(alphabet, length, a.get<double>())
                                   : ConjugateModel(alphabet, length, std::span<const double>(a.get<std::vector<double>>()));
  Rng rng(seed);
  const auto data = gen_synthetic_families(prior, families, members, rng);
  write_text(corpus_path, format_corpus(data.families, alphabet), force);
  write_text(latents_path, latents_to_json(data.latents).dump(2) + "\n", force);
}

struct PosteriorArgs {
  std::string model, pool, seed_seq, out, diagnostics;
  std::size_t particles = 4, members = 6, max_len = 0, n_cond_max = 75;
  double sigma_tilde = 0.25;
  std::string resampling = "multinomial";
  std::uint64_t rng_seed = 0;
};

void posterior_sample(const PosteriorArgs& a) {
  const AnyModel model = load_model_file(a.model);
  const Alphabet& alphabet = model_alphabet(model);
  const auto raw = parse_pool_csv(read_text(a.pool), alphabet, a.pool);
  const MeasurementPool pool = normalize_pool(raw);
  ConditioningSet cond;
  for (const auto& e : pool.entries()) {
    cond.sequences.push_back(e.sequence);
    cond.values.push_back(e.normalized);
  }
  const Sequence seed = a.seed_seq.empty() ? pool.entries()[pool.top_k(1).front()].sequence
                                           : parse_sequence(a.seed_seq, alphabet, "--seed-seq");
  SmcConfig smc;
  smc.particles = a.particles;
  smc.members = a.members;
  smc.max_len = a.max_len;
  if (a.resampling == "systematic") {
    smc.resampling = ResamplingScheme::systematic;
  } else if (a.resampling != "multinomial") {
    fail(ErrorKind::config, "invalid value for --resampling: '" + a.resampling + "'");
  }
  LikelihoodParams params;
  params.sigma_tilde = a.sigma_tilde;
  params.n_cond_max = a.n_cond_max;
  Rng rng(a.rng_seed);
  const PosteriorClone result = std::visit(
      [&](const auto& m) { return sample_posterior_clone(m, seed, cond, smc, params, rng); }, model);
  std::vector<Sequence> all{result.clone.seed};
  all.insert(all.end(), result.clone.members.begin(), result.clone.members.end());
  write_text(a.out, format_sequence_file(all, alphabet));
  if (!a.diagnostics.empty()) write_text(a.diagnostics, format_smc_trace_csv(result.diagnostics));
}

// check-likelihood input: header `f_a,f_b,y,sigma`, vectors space-separated.
std::string check_likelihood(const std::string& path, double tau) {
  const std::string text = read_text(path);
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != "f_a,f_b,y,sigma") throw ParseError(path, 1, 1, "expected header 'f_a,f_b,y,sigma'");
  auto parse_vec = [&](std::string_view field, std::size_t line, std::size_t col) {
    std::vector<double> v;
    std::size_t i = 0;
    while (i < field.size()) {
      while (i < field.size() && field[i] == ' ') ++i;
      if (i == field.size()) break;
      double x = 0.0;
      const auto r = std::from_chars(field.data() + i, field.data() + field.size(), x);
      if (r.ec != std::errc()) throw ParseError(path, line, col + i, "expected a number");
      v.push_back(x);
      i = static_cast<std::size_t>(r.ptr - field.data());
      if (i < field.size() && field[i] != ' ') throw ParseError(path, line, col + i, "expected a space");
    }
    return v;
  };
  std::string out = "row,closed_form_diff,oracle_diff,abs_error,converged\n";
  QuadratureOptions options;
  options.tau = tau;
  std::size_t row = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string_view> fields;
    std::vector<std::size_t> cols;
    std::size_t start = 0;
    for (;;) {
      const auto c = lines[i].find(',', start);
      fields.push_back(lines[i].substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
      cols.push_back(start + 1);
      if (c == std::string_view::npos) break;
      start = c + 1;
    }
    if (fields.size() != 4) throw ParseError(path, i + 1, 1, "expected 4 fields");
    const auto fa = parse_vec(fields[0], i + 1, cols[0]);
    const auto fb = parse_vec(fields[1], i + 1, cols[1]);
    const auto y = parse_vec(fields[2], i + 1, cols[2]);
    const auto s = parse_vec(fields[3], i + 1, cols[3]);
    if (s.size() != 1 || !(s[0] > 0.0)) throw ParseError(path, i + 1, cols[3], "sigma must be one positive number");
    if (fa.size() != y.size() || fb.size() != y.size())
      throw ParseError(path, i + 1, 1, "f_a, f_b and y must have equal length");
    const auto params = LikelihoodParams::with_sigma(s[0]);
    const double closed = log_marginal_likelihood(fa, y, params) - log_marginal_likelihood(fb, y, params);
    const auto qa = numeric_integration_oracle(fa, y, s[0], options);
    const auto qb = numeric_integration_oracle(fb, y, s[0], options);
    const double oracle = qa.log_value - qb.log_value;
    out += std::to_string(row++) + "," + format_double(closed) + "," + format_double(oracle) + "," +
           format_double(std::abs(closed - oracle)) + "," + ((qa.converged && qb.converged) ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clone-informed Bayesian optimization of discrete sequences"};
  app.require_subcommand(1);
  app.fallthrough();
  bool force = false;
  app.add_flag("--force", force, "Let gen-data overwrite existing files");

  std::string config_path;
  std::vector<std::string> overrides;

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic clonal families and their hidden latents");
  gen->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
  gen->add_option("--set", overrides, "Override a config key, key.path=value");

  std::string corpus_path, out_path, letters;
  std::size_t alphabet_size = 4, order = 1;
  double lambda = 1.0;
  auto* fit = app.add_subcommand("fit-model", "Fit an order-k Markov clone model to a corpus");
  fit->add_option("--corpus", corpus_path, "Corpus file")->required()->check(CLI::ExistingFile);
  fit->add_option("--alphabet-size", alphabet_size, "Alphabet size A");
  fit->add_option("--letters", letters, "Single-character letter map");
  fit->add_option("--order", order, "Markov order k");
  fit->add_option("--lambda", lambda, "Additive smoothing");
  fit->add_option("--out", out_path, "Model file")->required();

  std::string model_path, seed_seq;
  std::size_t members = 6, max_len = 0;
  std::uint64_t rng_seed = 0;
  auto* sample = app.add_subcommand("sample-clone", "Sample a clonal family from the model prior");
  sample->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  sample->add_option("--seed-seq", seed_seq, "Seed sequence X0")->required();
  sample->add_option("--members", members, "Number of members M");
  sample->add_option("--max-len", max_len, "Member length cap (0: twice the seed length)");
  sample->add_option("--rng-seed", rng_seed, "Random seed");
  sample->add_option("--out", out_path, "Sequence file")->required();

  PosteriorArgs pa;
  auto* post = app.add_subcommand("posterior-sample", "Sample a clone conditioned on measurements by twisted SMC");
  post->add_option("--model", pa.model, "Model file")->required()->check(CLI::ExistingFile);
  post->add_option("--pool", pa.pool, "Pool CSV")->required()->check(CLI::ExistingFile);
  post->add_option("--seed-seq", pa.seed_seq, "Seed sequence X0 (default: best pool entry)");
  post->add_option("--particles", pa.particles, "Particles D");
  post->add_option("--members", pa.members, "Members M");
  post->add_option("--max-len", pa.max_len, "Member length cap");
  post->add_option("--sigma-tilde", pa.sigma_tilde, "Base noise");
  post->add_option("--n-cond-max", pa.n_cond_max, "Noise tempering count");
  post->add_option("--resampling", pa.resampling, "multinomial or systematic");
  post->add_option("--rng-seed", pa.rng_seed, "Random seed");
  post->add_option("--out", pa.out, "Sequence file")->required();
  post->add_option("--diagnostics", pa.diagnostics, "Diagnostics CSV");

  std::size_t replicate = 0;
  auto* opt = app.add_subcommand("optimize", "Run one optimization trajectory");
  opt->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  opt->add_option("--set", overrides, "Override a config key, key.path=value");
  opt->add_option("--replicate", replicate, "Replicate index used to derive the sub-seed");
  opt->add_option("--out", out_path, "Trajectory CSV")->required();

  std::string out_dir;
  std::size_t threads = 0;
  auto* bench = app.add_subcommand("benchmark", "Run every method over all replicates and aggregate");
  bench->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  bench->add_option("--set", overrides, "Override a config key, key.path=value");
  bench->add_option("--out-dir", out_dir, "Output directory (overrides output_dir)");
  bench->add_option("--threads", threads, "Worker threads (overrides threads)");

  std::string input_path;
  double tau = 1e3;
  auto* check = app.add_subcommand("check-likelihood", "Compare closed-form likelihood differences with quadrature");
  check->add_option("--input", input_path, "CSV with header f_a,f_b,y,sigma")->required()->check(CLI::ExistingFile);
  check->add_option("--tau", tau, "Prior scale on the offset");
  check->add_option("--out", out_path, "Report CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(2, "usage", e.what());
  }

  try {
    if (*gen) {
      gen_data(load_config(config_path, overrides), force);
    } else if (*fit) {
      const Alphabet alphabet = letters.empty() ? Alphabet(alphabet_size) : Alphabet(letters.size(), letters);
      const auto corpus = parse_corpus(read_text(corpus_path), alphabet, corpus_path);
      const MarkovModel m = fit_markov(corpus, alphabet, order, lambda);
      write_text(out_path, model_to_json(m).dump() + "\n");
    } else if (*sample) {
      const AnyModel model = load_model_file(model_path);
      const Alphabet& alphabet = model_alphabet(model);
      const Sequence seed = parse_sequence(seed_seq, alphabet, "--seed-seq");
      Rng rng(rng_seed);
      const CloneStream clone =
          std::visit([&](const auto& m) { return sample_clone(m, seed, members, rng, max_len); }, model);
      std::vector<Sequence> all{clone.seed};
      all.insert(all.end(), clone.members.begin(), clone.members.end());
      write_text(out_path, format_sequence_file(all, alphabet));
    } else if (*post) {
      posterior_sample(pa);
    } else if (*opt) {
      const RunConfig c = run_config_from_json(load_config(config_path, overrides), config_dir(config_path));
      if (c.methods.size() != 1) fail(ErrorKind::config, "invalid config key 'methods': optimize runs one method");
      const AnyModel model = load_model(c);
      const Trajectory t = run_replicate(c, model, replicate, c.methods.front());
      write_text(out_path, format_trajectory_csv(t, replicate, c.alphabet));
    } else if (*bench) {
      RunConfig c = run_config_from_json(load_config(config_path, overrides), config_dir(config_path));
      if (!out_dir.empty()) c.output_dir = out_dir;
      if (threads > 0) c.threads = threads;
      write_benchmark(c, run_benchmark(c));
    } else if (*check) {
      const std::string report_text = check_likelihood(input_path, tau);
      if (out_path.empty()) {
        std::cout << report_text;
      } else {
        write_text(out_path, report_text);
      }
    }
  } catch (const ParseError& e) {
    return report(1, to_string(e.kind()), e.what());
  } catch (const Error& e) {
    return report(e.kind() == ErrorKind::config ? 2 : 1, to_string(e.kind()), e.what());
  } catch (const json::exception& e) {
    return report(2, "config", e.what());
  } catch (const std::exception& e) {
    return report(1, "internal", e.what());
  }
  return 0;
}
