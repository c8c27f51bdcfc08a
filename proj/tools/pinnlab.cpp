#include "pinn/cli/experiment.hpp"
#include "pinn/error.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace {

void print_presets(bool as_json) {
  using pinn::cli::preset_table;
  if (as_json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : preset_table()) {
      arr.push_back({{"name", p.name},
                     {"family", p.family},
                     {"hidden", p.hidden},
                     {"activation", p.activation.tag_name()},
                     {"param", p.activation.param},
                     {"equilibrate", p.equilibrate},
                     {"rff_features", p.rff_features},
                     {"description", p.description}});
    }
    std::cout << arr.dump(2) << '\n';
    return;
  }
  for (const auto& p : preset_table()) {
    std::string hidden;
    for (auto w : p.hidden) hidden += (hidden.empty() ? "" : "-") + std::to_string(w);
    std::cout << std::left << std::setw(24) << p.name << std::setw(14) << hidden << p.description << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees large temporaries every step; keeping them
  // on the heap instead of fresh mmaps saves a lot of kernel time.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif

  CLI::App app{"pinnlab: PINN conditioning and training experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string root;
  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--output-root", root, "directory the experiment output goes under "
                                         "(default: $PINNLAB_OUTPUT_ROOT, else the working directory)");

  bool presets_json = false;
  auto* presets = app.add_subcommand("presets", "list built-in architectures");
  presets->add_flag("--json", presets_json, "print as JSON");

  pinn::precond::VerificationConfig vc;
  auto* verify = app.add_subcommand("verify", "randomized check of the conditioning bounds");
  verify->add_option("--matrices", vc.matrices, "random matrices")->check(CLI::PositiveNumber);
  verify->add_option("--diagonals", vc.diagonals_per_matrix, "random diagonal scalings per matrix")
      ->check(CLI::PositiveNumber);
  verify->add_option("--n", vc.n, "matrix order")->check(CLI::Range(2, 64));
  verify->add_option("--seed", vc.seed, "seed");

  app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pinn::cli::kExitConfig;
  }

  if (*run) {
    const auto out = pinn::cli::run_config_file(config_path, pinn::cli::output_root(root), std::cerr);
    if (out.exit_code == pinn::cli::kExitOk) {
      nlohmann::json j{{"status", "ok"}, {"directory", out.directory.string()}, {"artifacts", out.artifacts}};
      std::cout << j.dump() << '\n';
    }
    return out.exit_code;
  }
  if (*presets) {
    print_presets(presets_json);
    return 0;
  }
  if (*verify) {
    try {
      const auto s = pinn::cli::verify_summary(pinn::precond::run_verification(vc));
      std::cout << s.report.dump(2) << '\n';
      return s.all_hold ? pinn::cli::kExitOk : pinn::cli::kExitViolations;
    } catch (const std::exception& e) {
      std::cerr << pinn::cli::error_json(e, pinn::cli::kExitNumeric).dump() << '\n';
      return pinn::cli::kExitNumeric;
    }
  }
  std::cout << "pinnlab " << pinn::cli::kVersion << '\n';
  return 0;
}
