// Command-line front end: run experiments, re-render reports, generate
// synthetic datasets and run the invariant checks.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lpf/checks.hpp"
#include "lpf/data.hpp"
#include "lpf/experiment.hpp"

namespace {

void apply_overrides(lpf::ExperimentConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects section.key=value, got '" + item + "'");
    }
    lpf::apply_setting(config, item.substr(0, eq), item.substr(eq + 1));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label prediction for semi-supervised cross-modal retrieval"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
  run->add_option("config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override a config key (section.key=value)");
  run->add_option("-o,--output", output_dir, "Artifact directory (overrides experiment.output_dir)");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Print the tables stored in an artifact directory");
  report->add_option("dir", report_dir, "Artifact directory")->required()->check(CLI::ExistingDirectory);

  lpf::SynthSpec synth;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic paired dataset");
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
  gen->add_option("--dim1", synth.dim_1, "Modality 1 dimension")->capture_default_str();
  gen->add_option("--dim2", synth.dim_2, "Modality 2 dimension")->capture_default_str();
  gen->add_option("--per-class", synth.per_class, "Samples per class")->capture_default_str();
  gen->add_option("--separation1", synth.separation_1, "Anchor spread, modality 1")->capture_default_str();
  gen->add_option("--separation2", synth.separation_2, "Anchor spread, modality 2")->capture_default_str();
  gen->add_option("--noise", synth.noise, "Per-sample noise std-dev")->capture_default_str();
  gen->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

  std::uint64_t check_seed = 0;
  auto* check = app.add_subcommand("check", "Run the invariant and oracle checks");
  check->add_option("--seed", check_seed, "Random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = lpf::load_config(config_path);
      apply_overrides(config, overrides);
      if (!output_dir.empty()) config.output_dir = output_dir;
      config.validate();
      const auto result = lpf::run_experiment(config);
      lpf::write_report(result, config.output_dir);
      std::cout << lpf::render_report(config.output_dir);
      std::cout << "artifacts written to " << config.output_dir.string() << '\n';
    } else if (*report) {
      std::cout << lpf::render_report(report_dir);
    } else if (*gen) {
      const std::filesystem::path dir(synth_out);
      std::filesystem::create_directories(dir);
      const auto ds = lpf::synth_generate(synth);
      lpf::save_dataset(ds, dir / "features_1.tsv", dir / "features_2.tsv", dir / "labels.tsv");
      std::cout << "wrote " << ds.size() << " pairs to " << dir.string() << '\n';
    } else if (*check) {
      bool ok = true;
      for (const auto& c : lpf::checks::run_all(check_seed)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        ok = ok && c.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
