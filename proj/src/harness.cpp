#include "shiftgcl/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace shiftgcl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kMario: return "mario";
    case Variant::kNoAd: return "no_ad";
    case Variant::kNoCmi: return "no_cmi";
    case Variant::kGrace: return "grace";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw UsageError("unknown variant '" + std::string(name) + "' (expected mario, no_ad, no_cmi, grace)");
}

namespace {

// Reads one JSON object, rejecting keys that were never asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError(where() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string field = where(key);
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw UsageError(field + ": expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_unsigned()) throw UsageError(field + ": expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw UsageError(field + ": expected a string");
    }
    out = it->get<T>();
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw UsageError(where(it.key()) + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ViewParams parse_view(const json& j, const std::string& path, ViewParams v) {
  ObjectReader r(j, path);
  r.read("feature_mask", v.feature_mask);
  r.read("edge_drop", v.edge_drop);
  r.finish();
  return v;
}

template <typename F>
void checked(const std::string& path, F&& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  ObjectReader top(j, "");
  if (const json* t = top.child("train")) {
    TrainConfig& tc = cfg.train;
    ObjectReader r(*t, "train");
    std::string encoder = std::string(encoder_kind_name(tc.encoder));
    r.read("encoder", encoder);
    try {
      tc.encoder = parse_encoder_kind(encoder);
    } catch (const std::invalid_argument& e) {
      throw UsageError("train.encoder: " + std::string(e.what()));
    }
    r.read("num_layers", tc.num_layers);
    r.read("hidden_dim", tc.hidden_dim);
    r.read("epochs", tc.epochs);
    r.read("lr", tc.lr);
    r.read("prototype_lr", tc.prototype_lr);
    r.read("prototype_steps", tc.prototype_steps);
    r.read("ascent_steps", tc.ascent_steps);
    r.read("ascent_step_size", tc.ascent_step_size);
    r.read("gamma", tc.gamma);
    r.read("tau", tc.tau);
    r.read("num_prototypes", tc.num_prototypes);
    r.read("sinkhorn_lambda", tc.sinkhorn_lambda);
    r.read("sinkhorn_iters", tc.sinkhorn_iters);
    if (const json* v = r.child("view1")) tc.view1 = parse_view(*v, "train.view1", tc.view1);
    if (const json* v = r.child("view2")) tc.view2 = parse_view(*v, "train.view2", tc.view2);
    r.read("seed", tc.seed);
    r.read("eval_every", tc.eval_every);
    r.finish();
  }
  if (const json* p = top.child("probe")) {
    ObjectReader r(*p, "probe");
    r.read("epochs", cfg.probe.epochs);
    r.read("lr", cfg.probe.lr);
    r.read("seed", cfg.probe.seed);
    r.finish();
  }
  if (const json* d = top.child("dataset")) {
    if (!d->is_string()) throw UsageError("dataset: expected a path string");
    cfg.dataset = d->get<std::string>();
  }
  top.finish();
  checked("train", [&] { cfg.train.validate(); });
  checked("probe", [&] { cfg.probe.validate(); });
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  auto view = [](const ViewParams& v) {
    return json{{"feature_mask", v.feature_mask}, {"edge_drop", v.edge_drop}};
  };
  return {{"train",
           {{"encoder", encoder_kind_name(t.encoder)},
            {"num_layers", t.num_layers},
            {"hidden_dim", t.hidden_dim},
            {"epochs", t.epochs},
            {"lr", t.lr},
            {"prototype_lr", t.prototype_lr},
            {"prototype_steps", t.prototype_steps},
            {"ascent_steps", t.ascent_steps},
            {"ascent_step_size", t.ascent_step_size},
            {"gamma", t.gamma},
            {"tau", t.tau},
            {"num_prototypes", t.num_prototypes},
            {"sinkhorn_lambda", t.sinkhorn_lambda},
            {"sinkhorn_iters", t.sinkhorn_iters},
            {"view1", view(t.view1)},
            {"view2", view(t.view2)},
            {"seed", t.seed},
            {"eval_every", t.eval_every}}},
          {"probe", {{"epochs", cfg.probe.epochs}, {"lr", cfg.probe.lr}, {"seed", cfg.probe.seed}}}};
}

RunConfig apply_variant(RunConfig cfg, Variant v) {
  if (v == Variant::kNoAd || v == Variant::kGrace) {
    cfg.train.ascent_step_size = 0.0;
    cfg.train.ascent_steps = 1;
  }
  if (v == Variant::kNoCmi || v == Variant::kGrace) cfg.train.gamma = 0.0;
  return cfg;
}

std::string config_digest(const RunConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

json metrics_to_json(const std::optional<Metrics>& m) {
  if (!m) return nullptr;
  json j = {{"accuracy", m->accuracy}, {"macro_f1", m->macro_f1}};
  if (m->roc_auc) j["roc_auc"] = *m->roc_auc;
  return j;
}

namespace {

json split_metrics_to_json(const SplitMetrics& s) {
  return {{"id_val", metrics_to_json(s.id_val)},
          {"id_test", metrics_to_json(s.id_test)},
          {"ood_val", metrics_to_json(s.ood_val)},
          {"ood_test", metrics_to_json(s.ood_test)}};
}

}  // namespace

json results_to_json(const PretrainResult& r, const std::string& digest) {
  return {{"config_digest", digest},
          {"best_epochs", {{"id", r.best_id_eval.epoch}, {"ood", r.best_ood_eval.epoch}}},
          {"id_test", metrics_to_json(r.best_id_eval.metrics.id_test)},
          {"ood_test", metrics_to_json(r.best_ood_eval.metrics.ood_test)},
          {"best_id", split_metrics_to_json(r.best_id_eval.metrics)},
          {"best_ood", split_metrics_to_json(r.best_ood_eval.metrics)}};
}

void guard_overwrite(const fs::path& path, const std::string& digest, bool force) {
  if (force || !fs::exists(path)) return;
  std::ifstream is(path);
  std::stringstream text;
  text << is.rdbuf();
  const std::string content = text.str();
  if (content.empty()) return;  // nothing to lose
  // Whole-document JSON, or the first record of a JSON-lines file.
  std::string existing;
  for (const std::string& doc : {content, content.substr(0, content.find('\n'))}) {
    try {
      const json j = json::parse(doc);
      if (j.is_object() && j.contains("config_digest")) existing = j["config_digest"].get<std::string>();
      break;
    } catch (const json::exception&) {
    }
  }
  if (existing != digest) {
    throw UsageError(path.string() + " was written by config " +
                     (existing.empty() ? std::string("<unknown>") : existing) + ", not " + digest +
                     "; rerun with --force to overwrite");
  }
}

std::string cmd_generate(const GenerateArgs& args) {
  if (args.out.empty()) throw UsageError("generate: --out is required");
  if (fs::exists(args.out) && !args.force) {
    throw UsageError(args.out.string() + " already exists; rerun with --force to overwrite");
  }
  std::ostringstream summary;
  auto describe = [&](const Dataset& d, const std::string& label) {
    summary << label << ": nodes=" << d.graph.num_nodes() << " edges=" << d.graph.num_edges()
            << " classes=" << d.num_classes() << " features=" << d.graph.feature_dim()
            << " shift=" << d.meta.shift_kind << '\n';
  };

  if (args.kind == "cbas") {
    const Dataset d = generate_cbas(args.cbas);
    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    save_dataset(d, args.out);
    describe(d, args.out.string());
  } else if (args.kind == "spurious") {
    const auto envs = generate_spurious(args.spurious);
    fs::create_directories(args.out);
    json manifest = {{"kind", "spurious"},
                     {"seed", args.spurious.seed},
                     {"num_envs", envs.size()},
                     {"files", json::array()}};
    for (const auto& env : envs) {
      std::ostringstream name;
      name << "env_" << std::setw(2) << std::setfill('0') << env.env_id << ".json";
      save_dataset(env.dataset, args.out / name.str());
      const char* role = env.env_id == 0 ? "train" : env.env_id == 1 ? "validation" : "test";
      manifest["files"].push_back({{"env_id", env.env_id}, {"file", name.str()}, {"role", role}});
      describe(env.dataset, (args.out / name.str()).string());
    }
    write_text(args.out / "manifest.json", manifest.dump(2) + "\n");
  } else {
    throw UsageError("generate: unknown kind '" + args.kind + "' (expected cbas or spurious)");
  }
  return summary.str();
}

json run_pretrain(const PretrainArgs& args, const Dataset& data) {
  const RunConfig resolved = apply_variant(args.config, args.variant);
  const std::string digest = config_digest(resolved);

  fs::create_directories(args.out_dir);
  const fs::path results_path = args.out_dir / "results.json";
  const fs::path log_path = args.out_dir / "train_log.jsonl";
  const fs::path ckpt_id = args.out_dir / "checkpoint_best_id.json";
  const fs::path ckpt_ood = args.out_dir / "checkpoint_best_ood.json";
  const fs::path manifest_path = args.out_dir / "manifest.json";
  for (const fs::path& p : {results_path, log_path, ckpt_id, ckpt_ood, manifest_path}) {
    guard_overwrite(p, digest, args.force);
  }

  const PretrainResult r = pretrain(data, resolved.train, resolved.probe, digest);
  const json results = results_to_json(r, digest);

  std::string log_text;
  for (const EpochLog& e : r.log) {
    json line = epoch_log_to_json(e);
    line["config_digest"] = digest;
    log_text += line.dump() + "\n";
  }
  write_text(log_path, log_text);
  write_text(ckpt_id, checkpoint_to_json(r.best_id).dump() + "\n");
  write_text(ckpt_ood, checkpoint_to_json(r.best_ood).dump() + "\n");
  write_text(results_path, results.dump(2) + "\n");
  const json manifest = {{"config_digest", digest},
                         {"variant", variant_name(args.variant)},
                         {"seeds", {resolved.train.seed}},
                         {"dataset", args.dataset_path.string()},
                         {"out_dir", args.out_dir.string()},
                         {"config", config_to_json(resolved)}};
  write_text(manifest_path, manifest.dump(2) + "\n");
  return results;
}

json cmd_pretrain(const PretrainArgs& args) {
  Dataset data;
  try {
    data = load_dataset(args.dataset_path);
  } catch (const DatasetFormatError& e) {
    throw UsageError(e.what());
  }
  return run_pretrain(args, data);
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

std::size_t worker_count() {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SHIFT_GCL_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = static_cast<std::size_t>(cap);
    } catch (const std::exception&) {
      throw UsageError("SHIFT_GCL_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
  }
  return n;
}

namespace {

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double selection_value(const json& metrics, std::size_t num_classes) {
  if (metrics.is_null()) return std::nan("");
  if (num_classes == 2 && metrics.contains("roc_auc")) return metrics["roc_auc"].get<double>();
  return metrics["accuracy"].get<double>();
}

}  // namespace

std::vector<AblationRow> run_ablation(const AblateArgs& args, const Dataset& data) {
  if (args.seeds.size() < 2) throw UsageError("ablate: need at least 2 seeds");
  std::set<std::uint64_t> unique(args.seeds.begin(), args.seeds.end());
  if (unique.size() != args.seeds.size()) throw UsageError("ablate: duplicate seeds");

  struct Cell {
    Variant variant;
    std::uint64_t seed;
    json results;
  };
  std::vector<Cell> cells;
  for (Variant v : kAllVariants)
    for (std::uint64_t s : args.seeds) cells.push_back({v, s, nullptr});

  const std::size_t threads = std::min(cells.size(), args.threads > 0 ? args.threads : worker_count());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        PretrainArgs pa;
        pa.config = args.config;
        pa.config.train.seed = cells[i].seed;
        pa.dataset_path = args.dataset_path;
        pa.variant = cells[i].variant;
        pa.force = args.force;
        pa.out_dir = args.out_dir / "cells" /
                     (variant_name(cells[i].variant) + "_seed" + std::to_string(cells[i].seed));
        cells[i].results = run_pretrain(pa, data);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  const std::size_t num_classes = data.num_classes();
  std::vector<AblationRow> rows;
  for (Variant v : kAllVariants) {
    AblationRow row;
    row.variant = v;
    for (const Cell& c : cells) {
      if (c.variant != v) continue;
      row.id_values.push_back(selection_value(c.results["id_test"], num_classes));
      row.ood_values.push_back(selection_value(c.results["ood_test"], num_classes));
    }
    row.id_mean = mean_of(row.id_values);
    row.id_std = sample_std(row.id_values);
    row.ood_mean = mean_of(row.ood_values);
    row.ood_std = sample_std(row.ood_values);
    rows.push_back(std::move(row));
  }

  const std::string digest = config_digest(args.config);
  fs::create_directories(args.out_dir);
  guard_overwrite(args.out_dir / "ablation.json", digest, args.force);
  write_text(args.out_dir / "ablation.json", ablation_json(rows, digest).dump(2) + "\n");
  write_text(args.out_dir / "ablation.csv", ablation_csv(rows));
  return rows;
}

std::vector<AblationRow> cmd_ablate(const AblateArgs& args) {
  Dataset data;
  try {
    data = load_dataset(args.dataset_path);
  } catch (const DatasetFormatError& e) {
    throw UsageError(e.what());
  }
  return run_ablation(args, data);
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "variant,id_test_mean,id_test_std,ood_test_mean,ood_test_std\n";
  for (const AblationRow& r : rows) {
    os << variant_name(r.variant) << ',' << r.id_mean << ',' << r.id_std << ',' << r.ood_mean << ','
       << r.ood_std << '\n';
  }
  return os.str();
}

json ablation_json(const std::vector<AblationRow>& rows, const std::string& digest) {
  json table = json::array();
  for (const AblationRow& r : rows) {
    table.push_back({{"variant", variant_name(r.variant)},
                     {"id_test_mean", r.id_mean},
                     {"id_test_std", r.id_std},
                     {"ood_test_mean", r.ood_mean},
                     {"ood_test_std", r.ood_std},
                     {"id_test_values", r.id_values},
                     {"ood_test_values", r.ood_values}});
  }
  return {{"config_digest", digest}, {"rows", std::move(table)}};
}

json case_result_to_json(const CaseResult& r) {
  return {{"t", r.t},
          {"n_samples", r.n_samples},
          {"align_estimate", r.align_estimate},
          {"align_std_error", r.align_std_error},
          {"align_analytic", r.align_analytic},
          {"risk_c0", r.risk_c0},
          {"risk_c_inv_t", r.risk_c_inv_t}};
}

json cmd_theory_check(double t, std::uint64_t n_samples, std::uint64_t seed) {
  try {
    return case_result_to_json(appendix_case(t, n_samples, seed));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

}  // namespace shiftgcl
