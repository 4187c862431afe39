#pragma once

// Chain CSV ingestion, result export and run manifests.
//
// Chain files have the header
//
//   individual_id,t,y,x_1,...,x_m[,z_index]
//
// with one row per observation, grouped by individual and sorted by t. The
// x columns exclude the intercept, which the loader prepends. The
// covariates on a row belong to the step that ends at that row, so the
// first row of a chain only contributes (t, y).

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "phhmm/em.hpp"
#include "phhmm/model.hpp"

namespace phhmm {

enum class TimeMode { discrete, heterogeneous };

TimeMode parse_time_mode(const std::string& text);

/// Gaps longer than this (hours) start a new chain.
inline constexpr double kChainBreakHours = 24.0;

std::vector<Chain> parse_chains(std::istream& in, TimeMode mode, const std::string& source = "<stream>");
std::vector<Chain> load_chains(const std::filesystem::path& path, TimeMode mode);

void write_chains(std::ostream& out, const std::vector<Chain>& chains);
void write_chains(const std::filesystem::path& path, const std::vector<Chain>& chains);

/// individual_id,segment,t,state with 1-based states.
void write_labels(const std::filesystem::path& path, const std::vector<Chain>& chains,
                  const std::vector<std::vector<int>>& labels);

/// 17 significant digits; "nan"/"inf" spelled out.
std::string format_double(double v);

struct ExportedFit {
  Method method = Method::ph;
  RandomEffects random_effects = RandomEffects::none;
  ModelParams params;
  std::vector<std::string> chain_ids;
};

/// Writes fit.json, posteriors.csv, decoded.csv and loglik_trace.csv into
/// `dir`. Returns the written paths.
std::vector<std::filesystem::path> export_fit(const FitResult& result, const std::vector<Chain>& chains,
                                              const std::filesystem::path& dir);

/// JSON text of the parameter file (stable key order).
std::string fit_to_json(const FitResult& result);

ExportedFit read_fit(const std::filesystem::path& path);
ExportedFit parse_fit_json(const std::string& text);

/// posteriors.csv layout: individual_id,segment,t,state,u_1..u_K.
void write_posteriors(const std::filesystem::path& path, const std::vector<Chain>& chains,
                      const std::vector<std::vector<int>>& labels, const std::vector<std::vector<Vector>>& u);

struct Manifest {
  std::string command;
  std::string config_json = "{}";
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::vector<std::filesystem::path> artifacts;
};

std::string utc_timestamp();
void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kLibraryVersion = "1.0.0";

}  // namespace phhmm
