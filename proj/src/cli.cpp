#include "phhmm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "phhmm/em.hpp"
#include "phhmm/errors.hpp"
#include "phhmm/io.hpp"
#include "phhmm/replicate.hpp"
#include "phhmm/simulate.hpp"

namespace phhmm {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

Vector vec_from(const json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

json vec_to(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

SimConfig sim_config_from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw InputError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  SimConfig c;
  if (j.contains("case")) c = find_case(j["case"].get<std::string>()).config;
  try {
    if (j.contains("mode")) {
      const auto m = j["mode"].get<std::string>();
      if (m == "survival") {
        c.mode = SimMode::survival;
      } else if (m == "discrete" || m == "logistic") {
        c.mode = SimMode::discrete;
      } else {
        throw InputError("config mode must be survival or discrete");
      }
    }
    if (j.contains("h_max")) c.h_max = j["h_max"].get<double>();
    if (j.contains("transitions")) c.n_transitions = j["transitions"].get<int>();
    if (j.contains("individuals")) c.n_individuals = j["individuals"].get<int>();
    if (j.contains("beta1")) c.beta1 = vec_from(j["beta1"]);
    if (j.contains("beta2")) c.beta2 = vec_from(j["beta2"]);
    if (j.contains("mu1")) c.mu1 = j["mu1"].get<double>();
    if (j.contains("mu2")) c.mu2 = j["mu2"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("interactions")) c.n_interactions = j["interactions"].get<int>();
    if (j.contains("random_intercept_sd1")) c.random_intercept_sd1 = j["random_intercept_sd1"].get<double>();
    if (j.contains("random_intercept_sd2")) c.random_intercept_sd2 = j["random_intercept_sd2"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config '" + path.string() + "': " + e.what());
  }
  return c;
}

json sim_config_json(const SimConfig& c) {
  json j;
  j["mode"] = c.mode == SimMode::survival ? "survival" : "discrete";
  j["h_max"] = c.h_max;
  j["transitions"] = c.n_transitions;
  j["individuals"] = c.n_individuals;
  j["beta1"] = vec_to(c.beta1);
  j["beta2"] = vec_to(c.beta2);
  j["mu1"] = c.mu1;
  j["mu2"] = c.mu2;
  j["seed"] = c.seed;
  j["interactions"] = c.n_interactions;
  j["random_intercept_sd1"] = c.random_intercept_sd1;
  j["random_intercept_sd2"] = c.random_intercept_sd2;
  return j;
}

struct SimulateArgs {
  std::string case_id, config, out;
  std::uint64_t seed = 1;
  int individuals = 50, transitions = 25;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& sub) {
  Manifest man;
  man.started = utc_timestamp();
  man.command = "simulate";
  SimConfig cfg;
  if (!a.case_id.empty()) {
    cfg = find_case(a.case_id).config;
  } else if (!a.config.empty()) {
    cfg = sim_config_from_file(a.config);
  } else {
    throw InputError("simulate needs --case or --config");
  }
  if (!a.config.empty() && !a.case_id.empty()) throw InputError("--case and --config are mutually exclusive");
  if (sub.count("--seed") || a.config.empty()) cfg.seed = a.seed;
  if (sub.count("--individuals") || a.config.empty()) cfg.n_individuals = a.individuals;
  if (sub.count("--transitions") || a.config.empty()) cfg.n_transitions = a.transitions;
  validate_sim_config(cfg);

  const auto data = simulate_dataset(cfg);
  std::vector<Chain> chains;
  std::vector<std::vector<int>> labels;
  for (const auto& d : data) {
    chains.push_back(d.chain);
    labels.push_back(d.states);
  }
  const fs::path out = a.out;
  fs::create_directories(out);
  write_chains(out / "chains.csv", chains);
  write_labels(out / "labels.csv", chains, labels);
  json snap = sim_config_json(cfg);
  if (!a.case_id.empty()) snap["case"] = a.case_id;
  man.config_json = snap.dump();
  man.seed = cfg.seed;
  man.artifacts = {out / "chains.csv", out / "labels.csv"};
  man.finished = utc_timestamp();
  write_manifest(out, man);
  return kExitOk;
}

struct FitArgs {
  std::string method = "ph", chains, mode = "heterogeneous", random_effects = "none", out;
  bool pooled = false;
  double tol = 1e-4;
  int max_iters = 500;
  int states = 2;
};

void print_warnings(const FitResult& fit, const std::string& label) {
  for (const auto& w : fit.warnings) std::cerr << "warning" << label << ": " << w << '\n';
}

int cmd_fit(const FitArgs& a) {
  Manifest man;
  man.started = utc_timestamp();
  man.command = "fit";
  const TimeMode mode = parse_time_mode(a.mode);
  EmConfig cfg;
  cfg.method = parse_method(a.method);
  cfg.random_effects = parse_random_effects(a.random_effects);
  cfg.tol = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.n_states = a.states;
  cfg.pmm_transition = mode == TimeMode::discrete ? Method::dt : Method::ph;
  validate_em_config(cfg);
  const auto chains = load_chains(a.chains, mode);

  json snap;
  snap["method"] = a.method;
  snap["chains"] = a.chains;
  snap["mode"] = a.mode;
  snap["random_effects"] = a.random_effects;
  snap["pooled"] = a.pooled;
  snap["tol"] = a.tol;
  snap["max_iters"] = a.max_iters;
  snap["states"] = a.states;
  man.config_json = snap.dump();

  const fs::path out = a.out;
  fs::create_directories(out);
  bool all_converged = true;
  if (a.pooled) {
    const FitResult fit = fit_em(chains, cfg);
    print_warnings(fit, "");
    all_converged = fit.converged;
    man.artifacts = export_fit(fit, chains, out);
  } else {
    const auto fits = fit_em_individuals(chains, cfg);
    std::size_t pos = 0;
    for (const auto& fit : fits) {
      std::vector<Chain> own(chains.begin() + static_cast<std::ptrdiff_t>(pos),
                             chains.begin() + static_cast<std::ptrdiff_t>(pos + fit.chain_ids.size()));
      pos += fit.chain_ids.size();
      const std::string id = own.front().id;
      print_warnings(fit, " (" + id + ")");
      all_converged = all_converged && fit.converged;
      const auto written = export_fit(fit, own, out / id);
      man.artifacts.insert(man.artifacts.end(), written.begin(), written.end());
    }
  }
  man.finished = utc_timestamp();
  write_manifest(out, man);
  return all_converged ? kExitOk : kExitNotConverged;
}

struct ReplicateArgs {
  int table = 1, replicates = 100, jobs = 1, individuals = 50, transitions = 25, max_iters = 500;
  std::uint64_t seed = 1;
  double tol = 1e-4;
  std::string out, cases, methods;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_replicate(const ReplicateArgs& a) {
  Manifest man;
  man.started = utc_timestamp();
  man.command = "replicate";
  if (a.table < 1 || a.table > 3) throw InputError("--table must be 1, 2 or 3");
  ReplicateConfig cfg;
  cfg.replicates = a.replicates;
  cfg.jobs = a.jobs;
  cfg.seed = a.seed;
  cfg.n_individuals = a.individuals;
  cfg.n_transitions = a.transitions;
  cfg.tol = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.cases = split_list(a.cases);
  for (const auto& id : cfg.cases) find_case(id);
  if (!a.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : split_list(a.methods)) cfg.methods.push_back(parse_method(m));
  }
  if (cfg.replicates < 1) throw InputError("--replicates must be at least 1");

  const auto records = run_replicates(cfg);
  const fs::path out = a.out;
  fs::create_directories(out);
  const fs::path raw = out / "replicates_raw.csv";
  const fs::path table = out / ("table" + std::to_string(a.table) + ".csv");
  write_raw_csv(raw, records);
  write_table_csv(table, summarize(records, a.table));

  json snap;
  snap["table"] = a.table;
  snap["replicates"] = a.replicates;
  snap["jobs"] = a.jobs;
  snap["individuals"] = a.individuals;
  snap["transitions"] = a.transitions;
  snap["tol"] = a.tol;
  snap["max_iters"] = a.max_iters;
  snap["cases"] = cfg.cases;
  man.config_json = snap.dump();
  man.seed = a.seed;
  man.artifacts = {table, raw};
  man.finished = utc_timestamp();
  write_manifest(out, man);
  return kExitOk;
}

struct DecodeArgs {
  std::string fit, chains, mode = "heterogeneous", algorithm = "map", out;
};

int cmd_decode(const DecodeArgs& a) {
  Manifest man;
  man.started = utc_timestamp();
  man.command = "decode";
  fs::path fit_path = a.fit;
  if (fs::is_directory(fit_path)) fit_path /= "fit.json";
  const ExportedFit fit = read_fit(fit_path);
  auto chains = load_chains(a.chains, parse_time_mode(a.mode));
  const int q = assign_groups(chains, fit.random_effects);
  const std::size_t p = fit.params.states.front().exits.front().beta.size();
  for (const auto& c : chains) {
    if (!c.records.empty() && c.n_covariates() != p) {
      throw InputError("chains have " + std::to_string(c.n_covariates()) + " covariates (with intercept), the fit has " +
                       std::to_string(p));
    }
  }
  for (const auto& st : fit.params.states) {
    for (const auto& h : st.exits) {
      if (h.b.size() != q) throw InputError("random-effect dimension of the fit does not match the chains");
    }
  }
  if (a.algorithm != "map" && a.algorithm != "viterbi") throw InputError("--algorithm must be map or viterbi");

  ModelParams params = fit.params;
  if (params.delta0.size() != chains.size()) {
    const auto k = static_cast<Eigen::Index>(params.n_states());
    params.delta0.assign(chains.size(), Vector::Constant(k, 1.0 / static_cast<double>(k)));
  }
  const TransitionMode mode = transition_mode(fit.method);
  std::vector<std::vector<int>> labels;
  std::vector<std::vector<Vector>> u;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto fb = forward_backward(chains[c], params, mode, c);
    const auto post = transition_posteriors(fb);
    u.push_back(post.u);
    labels.push_back(a.algorithm == "map" ? map_decode(post.u) : viterbi_decode(chains[c], params, mode, c));
  }
  write_posteriors(a.out, chains, labels, u);

  json snap;
  snap["fit"] = a.fit;
  snap["chains"] = a.chains;
  snap["mode"] = a.mode;
  snap["algorithm"] = a.algorithm;
  man.config_json = snap.dump();
  const fs::path out_path = a.out;
  man.artifacts = {out_path};
  man.finished = utc_timestamp();
  const fs::path dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  write_manifest(dir, man);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Latent-state alternating recurrent-event models fitted by EM"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate chains for a catalogue case or a JSON config");
  s->add_option("--case", sim.case_id, "case id such as 1.1");
  s->add_option("--config", sim.config, "JSON file with simulation settings");
  s->add_option("--out", sim.out, "output directory")->required();
  s->add_option("--seed", sim.seed, "base seed");
  s->add_option("--individuals", sim.individuals, "number of individuals");
  s->add_option("--transitions", sim.transitions, "records per individual");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit a model to a chain CSV");
  f->add_option("--method", fit.method, "pmm, dt, ct or ph");
  f->add_option("--chains", fit.chains, "chain CSV")->required();
  f->add_option("--mode", fit.mode, "discrete or heterogeneous");
  f->add_option("--random-effects", fit.random_effects, "none, hour or individual");
  f->add_flag("--pooled", fit.pooled, "one fit over all individuals");
  f->add_option("--tol", fit.tol, "L1 convergence threshold");
  f->add_option("--max-iters", fit.max_iters, "EM iteration cap");
  f->add_option("--states", fit.states, "number of latent states (ph and pmm only beyond 2)");
  f->add_option("--out", fit.out, "output directory")->required();

  ReplicateArgs rep;
  auto* r = app.add_subcommand("replicate", "Monte Carlo replication of the simulation tables");
  r->add_option("--table", rep.table, "1 (accuracy), 2 (state 1 parameters) or 3 (state 2 parameters)");
  r->add_option("--replicates", rep.replicates, "replicates per case");
  r->add_option("--jobs", rep.jobs, "worker threads");
  r->add_option("--seed", rep.seed, "base seed; replicate r uses seed + r");
  r->add_option("--out", rep.out, "output directory")->required();
  r->add_option("--cases", rep.cases, "comma-separated case ids (default all)");
  r->add_option("--methods", rep.methods, "comma-separated methods (default pmm,dt,ct,ph)");
  r->add_option("--individuals", rep.individuals, "individuals per dataset");
  r->add_option("--transitions", rep.transitions, "records per individual");
  r->add_option("--tol", rep.tol, "L1 convergence threshold");
  r->add_option("--max-iters", rep.max_iters, "EM iteration cap");

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "decode states with a fitted model");
  d->add_option("--fit", dec.fit, "fit directory or fit.json")->required();
  d->add_option("--chains", dec.chains, "chain CSV")->required();
  d->add_option("--mode", dec.mode, "discrete or heterogeneous");
  d->add_option("--algorithm", dec.algorithm, "map or viterbi");
  d->add_option("--out", dec.out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*s) return cmd_simulate(sim, *s);
    if (*f) return cmd_fit(fit);
    if (*r) return cmd_replicate(rep);
    if (*d) return cmd_decode(dec);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace phhmm
