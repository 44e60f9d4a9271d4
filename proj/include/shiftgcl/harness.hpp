// Experiment plumbing behind the command-line tool: config files, digests,
// variants, output directories and the four subcommands.

#ifndef SHIFTGCL_HARNESS_HPP
#define SHIFTGCL_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftgcl/datasets.hpp"
#include "shiftgcl/theory.hpp"
#include "shiftgcl/training.hpp"

namespace shiftgcl {

/// Bad flags, config or paths; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

enum class Variant { kMario, kNoAd, kNoCmi, kGrace };

inline constexpr Variant kAllVariants[] = {Variant::kMario, Variant::kNoAd, Variant::kNoCmi,
                                           Variant::kGrace};

std::string variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct RunConfig {
  TrainConfig train;
  ProbeConfig probe;
  std::optional<std::string> dataset;
};

/// Strict parse: unknown keys and ill-typed values raise UsageError naming
/// the field path (e.g. "train.view1.edge_drop").
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// {"train": {...}, "probe": {...}}; the dataset path is not part of it.
nlohmann::json config_to_json(const RunConfig& cfg);

/// mario: as given; no_ad: eps = 0, M = 1; no_cmi: gamma = 0; grace: both.
RunConfig apply_variant(RunConfig cfg, Variant v);

/// FNV-1a 64 of the canonical (sorted-key) JSON of the resolved config, as
/// 16 hex digits.
std::string config_digest(const RunConfig& cfg);

nlohmann::json metrics_to_json(const std::optional<Metrics>& m);
nlohmann::json results_to_json(const PretrainResult& r, const std::string& digest);

/// Throws UsageError when `path` exists and records a different digest,
/// unless force is set.
void guard_overwrite(const std::filesystem::path& path, const std::string& digest, bool force);

struct GenerateArgs {
  std::string kind = "cbas";  // cbas | spurious
  CbasParams cbas;
  SpuriousParams spurious;
  std::filesystem::path out;
  bool force = false;
};

/// cbas writes one dataset file at `out`; spurious writes env_XX.json files
/// plus manifest.json into directory `out`. Returns a printable summary.
std::string cmd_generate(const GenerateArgs& args);

struct PretrainArgs {
  RunConfig config;
  std::filesystem::path dataset_path;
  std::filesystem::path out_dir;
  Variant variant = Variant::kMario;
  bool force = false;
};

/// Writes train_log.jsonl, checkpoint_best_id.json, checkpoint_best_ood.json,
/// results.json and manifest.json into out_dir; returns the results JSON.
nlohmann::json cmd_pretrain(const PretrainArgs& args);
/// Same as cmd_pretrain with an already loaded dataset.
nlohmann::json run_pretrain(const PretrainArgs& args, const Dataset& data);

struct AblationRow {
  Variant variant;
  double id_mean = 0.0;
  double id_std = 0.0;
  double ood_mean = 0.0;
  double ood_std = 0.0;
  std::vector<double> id_values;
  std::vector<double> ood_values;
};

struct AblateArgs {
  RunConfig config;
  std::filesystem::path dataset_path;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  bool force = false;
  /// 0 means SHIFT_GCL_THREADS or the hardware concurrency.
  std::size_t threads = 0;
};

/// Runs every (variant, seed) cell, writes ablation.csv / ablation.json and
/// per-cell outputs under out_dir/cells. Rows follow kAllVariants order;
/// std is the sample (n - 1) standard deviation of the selection metric.
std::vector<AblationRow> cmd_ablate(const AblateArgs& args);
std::vector<AblationRow> run_ablation(const AblateArgs& args, const Dataset& data);

std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows, const std::string& digest);

nlohmann::json case_result_to_json(const CaseResult& r);
nlohmann::json cmd_theory_check(double t, std::uint64_t n_samples, std::uint64_t seed);

/// Keeps the large per-step temporaries on the heap instead of fresh mmap
/// pages. Call once at program start; a no-op off glibc.
void tune_allocator();

/// Worker cap from SHIFT_GCL_THREADS, else hardware concurrency (>= 1).
std::size_t worker_count();

}  // namespace shiftgcl

#endif  // SHIFTGCL_HARNESS_HPP
