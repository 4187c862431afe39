#include "phhmm/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "phhmm/errors.hpp"

namespace phhmm {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

TimeMode parse_time_mode(const std::string& text) {
  if (text == "discrete") return TimeMode::discrete;
  if (text == "heterogeneous") return TimeMode::heterogeneous;
  throw InputError("unknown mode '" + text + "' (expected discrete or heterogeneous)");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& cell, const char* what, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw InputError(std::string("line ") + std::to_string(line) + ": invalid " + what + " '" + cell + "'", line);
  }
}

long parse_integer(const std::string& cell, const char* what, std::size_t line) {
  try {
    std::size_t used = 0;
    const long v = std::stol(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw InputError(std::string("line ") + std::to_string(line) + ": invalid " + what + " '" + cell + "'", line);
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace

std::vector<Chain> parse_chains(std::istream& in, TimeMode mode, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(source + ": empty file", 1);
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "individual_id" || header[1] != "t" || header[2] != "y") {
    throw InputError(source + ": header must start with individual_id,t,y", 1);
  }
  const bool has_z = header.back() == "z_index";
  const std::size_t m = header.size() - 3 - (has_z ? 1 : 0);

  std::vector<Chain> chains;
  std::map<std::string, bool> seen;
  std::string current_id;
  double last_t = 0.0;
  std::size_t lineno = 1;
  bool open = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw InputError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                           " fields, expected " + std::to_string(header.size()),
                       lineno);
    }
    const std::string& id = cells[0];
    if (id.empty()) throw InputError(source + ": line " + std::to_string(lineno) + ": empty individual_id", lineno);
    const double t = parse_real(cells[1], "timestamp", lineno);
    const long y = parse_integer(cells[2], "count", lineno);
    if (y < 0) throw InputError(source + ": line " + std::to_string(lineno) + ": negative count", lineno);
    Vector x(static_cast<Eigen::Index>(m + 1));
    x(0) = 1.0;
    for (std::size_t c = 0; c < m; ++c) x(c + 1) = parse_real(cells[3 + c], "covariate", lineno);
    int group = -1;
    if (has_z && !cells.back().empty()) {
      const long z = parse_integer(cells.back(), "z_index", lineno);
      if (z < 0) throw InputError(source + ": line " + std::to_string(lineno) + ": negative z_index", lineno);
      group = static_cast<int>(z);
    }

    const bool new_individual = !open || id != current_id;
    if (new_individual) {
      if (seen.count(id)) {
        throw InputError(source + ": line " + std::to_string(lineno) + ": rows of individual '" + id +
                             "' are not contiguous",
                         lineno);
      }
      seen[id] = true;
      current_id = id;
      Chain c;
      c.id = id;
      c.t0 = t;
      c.y0 = static_cast<int>(y);
      chains.push_back(std::move(c));
      open = true;
      last_t = t;
      continue;
    }
    const double gap = t - last_t;
    if (gap == 0.0) {
      throw InputError(source + ": line " + std::to_string(lineno) + ": duplicate timestamp for '" + id + "'", lineno);
    }
    if (gap < 0.0) {
      throw InputError(source + ": line " + std::to_string(lineno) + ": timestamps of '" + id + "' are not sorted",
                       lineno);
    }
    last_t = t;
    if (gap > kChainBreakHours) {
      Chain c;
      c.id = id;
      c.segment = chains.back().segment + 1;
      c.t0 = t;
      c.y0 = static_cast<int>(y);
      chains.push_back(std::move(c));
      continue;
    }
    if (mode == TimeMode::discrete && gap != 1.0) {
      throw InputError(source + ": line " + std::to_string(lineno) + ": discrete mode needs unit spacing, found gap " +
                           format_double(gap),
                       lineno);
    }
    ObservationRecord rec;
    rec.t = t;
    rec.delta = gap;
    rec.x = std::move(x);
    rec.group = group;
    rec.y = static_cast<int>(y);
    chains.back().records.push_back(std::move(rec));
  }
  if (chains.empty()) throw InputError(source + ": no data rows", lineno);
  return chains;
}

std::vector<Chain> load_chains(const fs::path& path, TimeMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return parse_chains(in, mode, path.string());
}

void write_chains(std::ostream& out, const std::vector<Chain>& chains) {
  std::size_t m = 0;
  bool has_z = false;
  for (const auto& c : chains) {
    if (!c.records.empty()) m = std::max(m, c.n_covariates() - 1);
    for (const auto& r : c.records) has_z = has_z || r.group >= 0;
  }
  out << "individual_id,t,y";
  for (std::size_t k = 1; k <= m; ++k) out << ",x_" << k;
  if (has_z) out << ",z_index";
  out << '\n';
  for (const auto& c : chains) {
    for (std::size_t j = 0; j < c.n_states(); ++j) {
      // The first row has no step; repeat the first step's covariates.
      const ObservationRecord* rec = c.records.empty() ? nullptr : &c.records[j == 0 ? 0 : j - 1];
      out << c.id << ',' << format_double(c.time(j)) << ',' << c.count(j);
      for (std::size_t k = 1; k <= m; ++k) out << ',' << (rec ? format_double(rec->x(k)) : "0");
      if (has_z) {
        out << ',';
        if (rec && rec->group >= 0) out << rec->group;
      }
      out << '\n';
    }
  }
}

void write_chains(const fs::path& path, const std::vector<Chain>& chains) {
  auto out = open_out(path);
  write_chains(out, chains);
  close_out(out, path);
}

void write_labels(const fs::path& path, const std::vector<Chain>& chains, const std::vector<std::vector<int>>& labels) {
  auto out = open_out(path);
  out << "individual_id,segment,t,state\n";
  for (std::size_t c = 0; c < chains.size() && c < labels.size(); ++c) {
    for (std::size_t j = 0; j < labels[c].size(); ++j) {
      out << chains[c].id << ',' << chains[c].segment << ',' << format_double(chains[c].time(j)) << ','
          << labels[c][j] + 1 << '\n';
    }
  }
  close_out(out, path);
}

void write_posteriors(const fs::path& path, const std::vector<Chain>& chains, const std::vector<std::vector<int>>& labels,
                      const std::vector<std::vector<Vector>>& u) {
  auto out = open_out(path);
  const Eigen::Index k = (!u.empty() && !u.front().empty()) ? u.front().front().size() : 2;
  out << "individual_id,segment,t,state";
  for (Eigen::Index s = 1; s <= k; ++s) out << ",u_" << s;
  out << '\n';
  for (std::size_t c = 0; c < chains.size() && c < u.size(); ++c) {
    for (std::size_t j = 0; j < u[c].size(); ++j) {
      out << chains[c].id << ',' << chains[c].segment << ',' << format_double(chains[c].time(j)) << ','
          << labels[c][j] + 1;
      for (Eigen::Index s = 0; s < k; ++s) out << ',' << format_double(u[c][j](s));
      out << '\n';
    }
  }
  close_out(out, path);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void dump(const ojson& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case ojson::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner + ojson(it.key()).dump() + ": ";
        dump(it.value(), out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case ojson::value_t::array: {
      bool scalars = true;
      for (const auto& e : j) scalars = scalars && !e.is_structured();
      if (j.empty()) {
        out += "[]";
      } else if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump(j[i], out, indent + 1);
        }
        out += "]";
      } else {
        out += "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ",\n";
          out += inner;
          dump(j[i], out, indent + 1);
        }
        out += "\n" + pad + "]";
      }
      return;
    }
    case ojson::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

ojson vec_json(const Vector& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector json_vec(const ojson& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = a[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : a[i].get<double>();
  }
  return v;
}

}  // namespace

std::string fit_to_json(const FitResult& result) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["library_version"] = kLibraryVersion;
  j["method"] = to_string(result.method);
  j["random_effects"] = to_string(result.random_effects);
  j["n_states"] = result.params.n_states();
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["final_l1_change"] = result.final_change;
  j["monotone"] = result.monotone;
  j["log_likelihood"] = result.loglik_trace.empty() ? 0.0 : result.loglik_trace.back();
  j["clamp_events"] = result.clamp_events;
  ojson states = ojson::array();
  for (std::size_t s = 0; s < result.params.n_states(); ++s) {
    const auto& st = result.params.states[s];
    ojson js;
    js["state"] = s + 1;
    js["mu"] = st.mu;
    ojson exits = ojson::array();
    for (std::size_t e = 0; e < st.exits.size(); ++e) {
      const int to = exit_destination(static_cast<int>(s), e);
      const auto& h = st.exits[e];
      ojson je;
      je["to"] = to + 1;
      je["beta"] = vec_json(h.beta);
      Vector se = Vector::Constant(h.beta.size(), std::numeric_limits<double>::quiet_NaN());
      for (const auto& r : result.hazards) {
        if (r.from == static_cast<int>(s) && r.to == to) se = r.se;
      }
      je["se"] = vec_json(se);
      if (h.b.size() > 0) {
        je["sigma2"] = h.sigma2;
        je["b"] = vec_json(h.b);
      }
      exits.push_back(std::move(je));
    }
    js["exits"] = std::move(exits);
    states.push_back(std::move(js));
  }
  j["states"] = std::move(states);
  ojson chains = ojson::array();
  for (std::size_t c = 0; c < result.params.delta0.size(); ++c) {
    ojson jc;
    jc["id"] = c < result.chain_ids.size() ? result.chain_ids[c] : std::to_string(c + 1);
    jc["delta"] = vec_json(result.params.delta0[c]);
    chains.push_back(std::move(jc));
  }
  j["chains"] = std::move(chains);
  j["warnings"] = result.warnings;
  std::string out;
  dump(j, out, 0);
  out += '\n';
  return out;
}

ExportedFit parse_fit_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw InputError(std::string("fit file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw InputError("unsupported fit schema_version");
    ExportedFit out;
    out.method = parse_method(j.at("method").get<std::string>());
    out.random_effects = parse_random_effects(j.at("random_effects").get<std::string>());
    const auto& states = j.at("states");
    for (const auto& js : states) {
      StateModel st;
      st.mu = js.at("mu").get<double>();
      for (const auto& je : js.at("exits")) {
        TransitionHazard h;
        h.beta = json_vec(je.at("beta"));
        if (je.contains("b")) {
          h.b = json_vec(je.at("b"));
          h.sigma2 = je.at("sigma2").get<double>();
        }
        st.exits.push_back(std::move(h));
      }
      out.params.states.push_back(std::move(st));
    }
    for (const auto& jc : j.at("chains")) {
      out.chain_ids.push_back(jc.at("id").get<std::string>());
      out.params.delta0.push_back(json_vec(jc.at("delta")));
    }
    validate_params(out.params);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("fit file is missing fields: ") + e.what());
  }
}

ExportedFit read_fit(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_fit_json(ss.str());
}

std::vector<fs::path> export_fit(const FitResult& result, const std::vector<Chain>& chains, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> written;

  const fs::path json_path = dir / "fit.json";
  {
    auto out = open_out(json_path);
    out << fit_to_json(result);
    close_out(out, json_path);
  }
  written.push_back(json_path);

  std::vector<std::vector<Vector>> u;
  for (const auto& pw : result.posterior) u.push_back(pw.u);
  const fs::path post_path = dir / "posteriors.csv";
  write_posteriors(post_path, chains, result.decoded, u);
  written.push_back(post_path);

  const fs::path labels_path = dir / "decoded.csv";
  write_labels(labels_path, chains, result.decoded);
  written.push_back(labels_path);

  const fs::path trace_path = dir / "loglik_trace.csv";
  {
    auto out = open_out(trace_path);
    out << "iteration,loglik\n";
    for (std::size_t i = 0; i < result.loglik_trace.size(); ++i) {
      out << i + 1 << ',' << format_double(result.loglik_trace[i]) << '\n';
    }
    close_out(out, trace_path);
  }
  written.push_back(trace_path);
  return written;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const Manifest& manifest) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["library_version"] = kLibraryVersion;
  j["command"] = manifest.command;
  j["config"] = ojson::parse(manifest.config_json);
  j["seed"] = manifest.seed;
  j["started"] = manifest.started;
  j["finished"] = manifest.finished;
  ojson arts = ojson::array();
  for (const auto& a : manifest.artifacts) arts.push_back(a.lexically_relative(dir).generic_string());
  j["artifacts"] = std::move(arts);
  std::string text;
  dump(j, text, 0);
  text += '\n';
  const fs::path path = dir / "manifest.json";
  auto out = open_out(path);
  out << text;
  close_out(out, path);
}

}  // namespace phhmm
