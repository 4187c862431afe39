#include "phhmm/replicate.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "phhmm/errors.hpp"
#include "phhmm/io.hpp"

namespace phhmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<SimCase> selected_cases(const ReplicateConfig& config) {
  if (config.cases.empty()) return case_catalog();
  std::vector<SimCase> out;
  for (const auto& id : config.cases) out.push_back(find_case(id));
  return out;
}

}  // namespace

ReplicateRecord fit_replicate(const SimCase& sim_case, const std::vector<SimulatedChain>& data, Method method,
                              const ReplicateConfig& config) {
  ReplicateRecord rec;
  rec.case_id = sim_case.id;
  rec.method = method;
  std::vector<Chain> chains;
  std::vector<int> truth;
  for (const auto& d : data) {
    chains.push_back(d.chain);
    truth.insert(truth.end(), d.states.begin(), d.states.end());
  }
  EmConfig cfg;
  cfg.method = method;
  cfg.tol = config.tol;
  cfg.max_iters = config.max_iters;
  cfg.pmm_transition = sim_case.config.mode == SimMode::discrete ? Method::dt : Method::ph;
  try {
    const FitResult fit = fit_em(chains, cfg);
    std::vector<int> decoded;
    for (const auto& d : fit.decoded) decoded.insert(decoded.end(), d.begin(), d.end());
    rec.accuracy = accuracy(truth, decoded);
    rec.mu1 = fit.params.states[0].mu;
    rec.mu2 = fit.params.states[1].mu;
    rec.beta1 = fit.params.hazard(0, 1).beta;
    rec.beta2 = fit.params.hazard(1, 0).beta;
    rec.se1 = fit.hazard(0, 1).se;
    rec.se2 = fit.hazard(1, 0).se;
    rec.converged = fit.converged;
    rec.iterations = fit.iterations;
    rec.monotone = fit.monotone;
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
      rec.max_decrease = std::max(rec.max_decrease, fit.loglik_trace[i - 1] - fit.loglik_trace[i]);
    }
    rec.ok = true;
  } catch (const Error& e) {
    rec.error = e.what();
  }
  return rec;
}

std::vector<ReplicateRecord> run_replicates(const ReplicateConfig& config) {
  if (config.replicates < 1) throw DomainError("replicates must be at least 1");
  const auto cases = selected_cases(config);
  const std::size_t n_methods = config.methods.size();
  const std::size_t n_tasks = cases.size() * static_cast<std::size_t>(config.replicates);
  std::vector<ReplicateRecord> out(n_tasks * n_methods);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  auto worker = [&]() {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= n_tasks) return;
      try {
        const SimCase& sc = cases[task / static_cast<std::size_t>(config.replicates)];
        const int r = static_cast<int>(task % static_cast<std::size_t>(config.replicates));
        SimConfig sim = sc.config;
        sim.seed = config.seed + static_cast<std::uint64_t>(r);
        sim.n_individuals = config.n_individuals;
        sim.n_transitions = config.n_transitions;
        const auto data = simulate_dataset(sim);
        for (std::size_t m = 0; m < n_methods; ++m) {
          ReplicateRecord rec = fit_replicate(sc, data, config.methods[m], config);
          rec.replicate = r;
          rec.seed = sim.seed;
          out[task * n_methods + m] = std::move(rec);
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, config.jobs);
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<CellSummary> summarize(const std::vector<ReplicateRecord>& records, int table) {
  if (table < 1 || table > 3) throw DomainError("table must be 1, 2 or 3");
  // Keep first-seen order of (case, method).
  std::vector<std::pair<std::string, Method>> keys;
  std::map<std::pair<std::string, int>, std::vector<const ReplicateRecord*>> groups;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.case_id, static_cast<int>(r.method));
    if (!groups.count(key)) keys.emplace_back(r.case_id, r.method);
    groups[key].push_back(&r);
  }

  std::vector<CellSummary> out;
  for (const auto& [case_id, method] : keys) {
    const auto& group = groups.at({case_id, static_cast<int>(method)});
    const SimCase sc = find_case(case_id);
    struct Column {
      std::string name;
      double truth;
      std::function<double(const ReplicateRecord&)> get;
    };
    std::vector<Column> cols;
    if (table == 1) {
      cols.push_back({"accuracy", kNaN, [](const ReplicateRecord& r) { return r.accuracy; }});
    } else {
      const bool first = table == 2;
      const Vector& beta = first ? sc.config.beta1 : sc.config.beta2;
      const std::string s = first ? "1" : "2";
      cols.push_back({"mu" + s, first ? sc.config.mu1 : sc.config.mu2,
                      [first](const ReplicateRecord& r) { return first ? r.mu1 : r.mu2; }});
      for (Eigen::Index k = 0; k < beta.size(); ++k) {
        cols.push_back({"beta" + s + std::to_string(k), beta(k), [first, k](const ReplicateRecord& r) {
                          return first ? r.beta1(k) : r.beta2(k);
                        }});
      }
    }
    for (const auto& col : cols) {
      CellSummary cell;
      cell.case_id = case_id;
      cell.method = method;
      cell.parameter = col.name;
      cell.truth = col.truth;
      double sum = 0.0, sq_err = 0.0;
      std::vector<double> values;
      for (const auto* r : group) {
        if (!r->ok) {
          ++cell.failures;
          continue;
        }
        const double v = col.get(*r);
        values.push_back(v);
        sum += v;
        if (!std::isnan(col.truth)) sq_err += (v - col.truth) * (v - col.truth);
      }
      cell.n = static_cast<int>(values.size());
      cell.mean = cell.n > 0 ? sum / cell.n : kNaN;
      double ss = 0.0;
      for (double v : values) ss += (v - cell.mean) * (v - cell.mean);
      cell.se = cell.n > 1 ? std::sqrt(ss / (cell.n - 1)) : kNaN;
      cell.mse = (!std::isnan(col.truth) && cell.n > 0) ? sq_err / cell.n : kNaN;
      out.push_back(std::move(cell));
    }
  }
  return out;
}

namespace {

std::string cell(double v) { return std::isnan(v) ? "NA" : format_double(v); }

std::string join(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + cell(v(i));
  return s;
}

}  // namespace

void write_raw_csv(const std::filesystem::path& path, const std::vector<ReplicateRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "case,method,replicate,seed,ok,accuracy,mu1,beta1,se1,mu2,beta2,se2,converged,iterations,monotone,"
         "max_loglik_decrease,error\n";
  for (const auto& r : records) {
    std::string err = r.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    }
    out << r.case_id << ',' << to_string(r.method) << ',' << r.replicate << ',' << r.seed << ',' << (r.ok ? 1 : 0)
        << ',' << cell(r.ok ? r.accuracy : kNaN) << ',' << cell(r.ok ? r.mu1 : kNaN) << ',' << join(r.beta1) << ','
        << join(r.se1) << ',' << cell(r.ok ? r.mu2 : kNaN) << ',' << join(r.beta2) << ',' << join(r.se2) << ','
        << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << (r.monotone ? 1 : 0) << ','
        << cell(r.max_decrease) << ',' << err << '\n';
  }
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void write_table_csv(const std::filesystem::path& path, const std::vector<CellSummary>& cells) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "case,method,parameter,truth,mean,se,mse,n,failures\n";
  for (const auto& c : cells) {
    out << c.case_id << ',' << to_string(c.method) << ',' << c.parameter << ',' << cell(c.truth) << ','
        << cell(c.mean) << ',' << cell(c.se) << ',' << cell(c.mse) << ',' << c.n << ',' << c.failures << '\n';
  }
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace phhmm
