// shift_gcl: dataset generation, pretraining, ablation and the analytic check.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shiftgcl/harness.hpp"

namespace {

using namespace shiftgcl;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("--seeds: '" + item + "' is not a seed");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw UsageError("--seeds: empty list");
  return seeds;
}

RunConfig resolve_config(const std::string& config_path, const std::string& dataset_flag,
                         std::filesystem::path& dataset_path) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  if (!dataset_flag.empty()) {
    dataset_path = dataset_flag;
  } else if (cfg.dataset) {
    dataset_path = *cfg.dataset;
    // Relative dataset paths in a config are resolved next to the config.
    if (dataset_path.is_relative() && !config_path.empty()) {
      dataset_path = std::filesystem::path(config_path).parent_path() / dataset_path;
    }
  } else {
    throw UsageError("no dataset given (use --dataset or a \"dataset\" key in the config)");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Graph contrastive pretraining under distribution shift"};
  app.require_subcommand(1);

  GenerateArgs gen;
  std::string shift = "concept";
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("kind", gen.kind, "cbas or spurious")->required();
  generate->add_option("--out", gen_out, "Output file (cbas) or directory (spurious)")->required();
  generate->add_option("--seed", gen.cbas.seed, "Generator seed");
  generate->add_option("--shift", shift, "concept or covariate (cbas)");
  generate->add_option("--base-nodes", gen.cbas.base_nodes, "Base graph size (cbas)");
  generate->add_option("--houses", gen.cbas.num_houses, "Number of house motifs (cbas)");
  generate->add_option("--rho", gen.cbas.spurious_strength, "Color/label correlation on ID nodes (cbas)");
  generate->add_option("--noise", gen.cbas.noise_std, "Feature noise std (cbas)");
  generate->add_option("--nodes", gen.spurious.n_nodes, "Nodes per graph (spurious)");
  generate->add_option("--envs", gen.spurious.num_envs, "Number of environments (spurious)");
  generate->add_option("--classes", gen.spurious.num_classes, "Number of classes (spurious)");
  generate->add_option("--d1", gen.spurious.d1, "Invariant feature width (spurious)");
  generate->add_option("--d2", gen.spurious.d2, "Spurious feature width (spurious)");
  generate->add_flag("--force", gen.force, "Overwrite existing output");

  std::string config_path, dataset_flag, out_dir, variant = "mario", seeds_text;
  std::uint64_t seed = 0;
  bool force = false;
  std::size_t threads = 0;

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain one model and evaluate it");
  pretrain->add_option("--config", config_path, "JSON config file");
  pretrain->add_option("--dataset", dataset_flag, "Dataset file");
  pretrain->add_option("--out", out_dir, "Output directory")->required();
  auto* seed_opt = pretrain->add_option("--seed", seed, "Training seed (overrides the config)");
  pretrain->add_option("--variant", variant, "mario, no_ad, no_cmi or grace");
  pretrain->add_flag("--force", force, "Overwrite outputs from a different config");

  auto* ablate = app.add_subcommand("ablate", "Run every variant over several seeds");
  ablate->add_option("--config", config_path, "JSON config file");
  ablate->add_option("--dataset", dataset_flag, "Dataset file");
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_option("--seeds", seeds_text, "Comma-separated seeds")->required();
  ablate->add_option("--threads", threads, "Worker cap (default SHIFT_GCL_THREADS or all cores)");
  ablate->add_flag("--force", force, "Overwrite outputs from a different config");

  double t = 0.1;
  std::uint64_t samples = 1000000;
  std::uint64_t theory_seed = 0;
  auto* theory = app.add_subcommand("theory-check", "Monte Carlo check of the two-graph special case");
  theory->add_option("--t", t, "Shift magnitude in (0, 1)");
  theory->add_option("--samples", samples, "Monte Carlo sample count");
  theory->add_option("--seed", theory_seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (generate->parsed()) {
      gen.out = gen_out;
      gen.spurious.seed = gen.cbas.seed;
      try {
        gen.cbas.shift_kind = parse_shift_kind(shift);
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--shift: ") + e.what());
      }
      try {
        gen.cbas.validate();
        gen.spurious.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::cout << cmd_generate(gen);
    } else if (pretrain->parsed()) {
      PretrainArgs args;
      args.config = resolve_config(config_path, dataset_flag, args.dataset_path);
      if (seed_opt->count() > 0) args.config.train.seed = seed;
      args.out_dir = out_dir;
      args.variant = parse_variant(variant);
      args.force = force;
      const auto results = cmd_pretrain(args);
      std::cout << results.dump(2) << '\n';
    } else if (ablate->parsed()) {
      AblateArgs args;
      args.config = resolve_config(config_path, dataset_flag, args.dataset_path);
      args.seeds = parse_seed_list(seeds_text);
      args.out_dir = out_dir;
      args.force = force;
      args.threads = threads;
      std::cout << ablation_csv(cmd_ablate(args));
    } else if (theory->parsed()) {
      std::cout << cmd_theory_check(t, samples, theory_seed).dump(2) << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
