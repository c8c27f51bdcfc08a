#pragma once

#include "pinn/nn/activation.hpp"
#include "pinn/ntk/ntk.hpp"
#include "pinn/precond/precond.hpp"
#include "pinn/train/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pinn::cli {

inline constexpr std::string_view kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolations = 1;  // verify found property violations
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// ---------------------------------------------------------------------------
// Presets.

struct Preset {
  std::string name;
  std::string family;                // tanh-pinn, g-pinn, ...
  std::vector<std::size_t> hidden;   // hidden widths; input and output come from the problem
  nn::Activation activation;
  bool equilibrate = false;
  std::size_t rff_features = 0;
  double rff_scale = 1.0;
  std::string description;

  nn::NetworkOptions options() const { return {equilibrate, rff_features, rff_scale}; }
  /// (n_0, hidden..., 1)
  std::vector<std::size_t> widths(std::size_t input_dim) const;
};

/// Every built-in architecture, sorted by name. Parameterized families are
/// named like "g-pinn-3x128-s0.1" and "sine-pinn-2x128-f10"; the rest like
/// "eg-pinn-2x128". A bare family name ("eg-pinn", "g-pinn", ...) is the
/// 3x128 member with the family's default parameter.
const std::vector<Preset>& preset_table();
/// Throws Error(ConfigError) for unknown names.
const Preset& find_preset(const std::string& name);

// ---------------------------------------------------------------------------
// Config files: "[section]" headers and "key = value" lines, '#' or ';'
// comments, blank lines ignored.

using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

/// Syntax only. Throws Error(ConfigError, ..., {line}) on malformed lines,
/// keys outside a section and duplicate keys.
RawConfig parse_config_text(std::string_view text);
/// Throws IoError when unreadable.
RawConfig read_config_file(const std::filesystem::path& path);

enum class ExperimentKind { Train, NtkSweep, Lipschitz, Landscape, PrecondVerify };

std::string_view to_string(ExperimentKind kind);

struct SamplingCounts {
  std::size_t n_boundary;
  std::size_t n_residual;
};
/// Protocol defaults: poisson 2/1000 (both endpoints), diffusion 100/1000,
/// burgers 100/10000.
SamplingCounts default_sampling(const std::string& problem);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Train;
  std::string problem = "poisson";
  std::string preset = "eg-pinn-2x128";
  std::string output = "run";
  std::size_t replicas = 1;
  std::size_t workers = 1;  // 0 = one per hardware thread

  std::size_t n_boundary = 2;
  std::size_t n_residual = 1000;
  std::uint64_t seed = 1;

  train::TrainConfig train;  // epochs default 1000 here
  bool timing = true;        // false writes 0 in every seconds column

  ntk::SweepConfig ntk;
  ntk::LipschitzSweepConfig lipschitz;
  train::LandscapeConfig landscape;
  precond::VerificationConfig precond;

  ExperimentConfig();
};

/// Semantic validation and defaults. Throws Error(ConfigError) on unknown
/// sections or keys, unparsable values, counts below one, unknown problems
/// or presets.
ExperimentConfig resolve_config(const RawConfig& raw);

/// The fully materialized config, as JSON and as config text that resolves
/// back to the same values.
nlohmann::json config_to_json(const ExperimentConfig& config);
std::string config_to_text(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Running.

struct RunOutcome {
  int exit_code = kExitOk;
  std::filesystem::path directory;      // empty if nothing was created
  std::vector<std::string> artifacts;   // file names inside directory
  nlohmann::json error;                 // null on success
};

/// Output root: the argument if nonempty, else $PINNLAB_OUTPUT_ROOT, else
/// the current directory.
std::filesystem::path output_root(const std::filesystem::path& override_root = {});

/// Runs one experiment into root/config.output. Artifacts are staged and
/// moved into place only on success; on a numeric failure the directory
/// holds error.json alone. An existing directory is replaced only if it
/// carries a manifest from an earlier run.
RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& root);

/// Reads, resolves and runs a config file. Config and IO problems give exit
/// 2 with nothing written; the error JSON is also printed to err.
RunOutcome run_config_file(const std::filesystem::path& path, const std::filesystem::path& root,
                           std::ostream& err);

/// {"status":"error","code":..,"message":..,"where":[..],"exit_code":..}
nlohmann::json error_json(const std::exception& e, int exit_code);

/// Precond suite as JSON plus whether every asserted property held.
struct VerifySummary {
  nlohmann::json report;
  bool all_hold = false;
};
VerifySummary verify_summary(const precond::VerificationReport& report);

}  // namespace pinn::cli
