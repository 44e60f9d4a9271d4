// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "adversarial_support.hpp"
#include "op_operands.hpp"
#include "shiftgcl/harness.hpp"
#include "sinkhorn_oracle.hpp"
#include "test_support.hpp"

namespace shiftgcl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Gradient checks over every op and the composed training objective.
Outcome autodiff_soundness() {
  Clock clock;
  Rng rng(1);
  double worst_op = 0.0;
  for (OpKind kind : kAllOps) worst_op = std::max(worst_op, test::op_gradient_error(kind, 10, rng));

  double worst_pipeline = 0.0;
  for (EncoderKind kind : {EncoderKind::kGcn, EncoderKind::kSageMean}) {
    const Graph g = test::random_graph(8, 0.35, 4, rng);
    Rng view_rng(kind == EncoderKind::kGcn ? 2 : 3);
    const Graph a = sample_view(g, {0.2, 0.2}, view_rng), b = sample_view(g, {0.3, 0.3}, view_rng);
    const EncoderConfig ec{kind, 2, 4, 5};
    const Model m = init_params(ec, 7);
    const SparseMatrix pa = propagation_for(a, kind), pb = propagation_for(b, kind);
    const Prototypes protos = Prototypes::random(5, 3, rng);
    const ObjectiveConfig obj{0.5, 0.5, 20.0, 3};
    const PseudoLabels labels = pseudo_labels(project(encode(a, m), m), protos.centers());

    std::vector<Tensor> inputs{a.features(), b.features()};
    for (const auto& [name, p] : m.named_params()) inputs.push_back(*p);
    const std::size_t layers = ec.num_layers;
    const bool sage = kind == EncoderKind::kSageMean;
    worst_pipeline = std::max(
        worst_pipeline, finite_diff_check(
                            [&](Tape&, std::span<const Var> xs) {
                              ModelVars vars;
                              std::size_t next = 2;
                              for (std::size_t l = 0; l < layers; ++l) vars.weights.push_back(xs[next++]);
                              if (sage)
                                for (std::size_t l = 0; l < layers; ++l) vars.neighbor_weights.push_back(xs[next++]);
                              vars.proj_w1 = xs[next++];
                              vars.proj_w2 = xs[next++];
                              Var za = project(encode(pa, xs[0], vars, ec), vars);
                              Var zb = project(encode(pb, xs[1], vars, ec), vars);
                              return robust_loss(za, zb, labels, obj);
                            },
                            inputs, 1e-4));
  }
  const double secs = clock.seconds();
  Outcome o;
  o.pass = worst_op < 1e-4 && worst_pipeline < 1e-4 && secs < 60.0;
  o.detail = "max rel err ops " + fmt("%.2e", worst_op) + ", pipeline " + fmt("%.2e", worst_pipeline) +
             " (limit 1e-4), " + fmt("%.1f", secs) + " s (limit 60)";
  return o;
}

// 2. Balanced assignment marginals and the independent IPF reference.
Outcome sinkhorn_marginals() {
  Rng rng(2);
  double worst_residual = 0.0, worst_oracle = 0.0;
  int residual_fail = 0, oracle_fail = 0;
  const int instances = 100;
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = 2 + rng.below(63), k = 2 + rng.below(15);
    const Tensor s = test::random_scores(n, k, rng);
    const Tensor q = sinkhorn(s, 20.0, 50);
    const double r = test::marginal_residual(q);
    const double d = kernels::max_abs_diff(q, test::ipf_oracle(s, 20.0));
    worst_residual = std::max(worst_residual, r);
    worst_oracle = std::max(worst_oracle, d);
    residual_fail += r >= 1e-6;
    oracle_fail += d >= 1e-8;
  }
  Outcome o;
  o.pass = residual_fail == 0 && oracle_fail == 0;
  o.detail = "scores U(-1,1), n<=64, K<=16, lambda 20, 50 iters: worst residual " + fmt("%.2e", worst_residual) +
             " (" + std::to_string(residual_fail) + "/" + std::to_string(instances) +
             " >= 1e-6), worst oracle diff " + fmt("%.2e", worst_oracle) + " (" + std::to_string(oracle_fail) + "/" +
             std::to_string(instances) + " >= 1e-8)";
  return o;
}

// 3. Exact loss identities.
Outcome loss_degeneracies() {
  Rng rng(3);
  double worst_single = 0.0, worst_singleton = 0.0, worst_gamma0 = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng.below(40);
    const Tensor u = test::random_unit_rows(n, 6, rng), v = test::random_unit_rows(n, 6, rng);
    Tape t;
    Var vu = t.leaf(u), vv = t.leaf(v);
    const double mi = mi_loss(vu, vv, 0.2).value().item();
    const double cmi_one = cmi_loss(vu, vv, PseudoLabels(n, 3), 0.2).value().item();
    PseudoLabels own(n);
    std::iota(own.begin(), own.end(), 0);
    const double cmi_own = cmi_loss(vu, vv, own, 0.2).value().item();
    PseudoLabels mixed(n);
    for (auto& l : mixed) l = rng.below(4);
    ObjectiveConfig cfg;
    cfg.gamma = 0.0;
    const double rob = robust_loss(vu, vv, mixed, cfg).value().item();
    worst_single = std::max(worst_single, std::abs(cmi_one - mi));
    worst_singleton = std::max(worst_singleton, std::abs(cmi_own));
    worst_gamma0 = std::max(worst_gamma0, std::abs(rob - mi));
  }
  Rng one(4);
  Tape t;
  const double mi_n1 = mi_loss(t.leaf(test::random_unit_rows(1, 6, one)), t.leaf(test::random_unit_rows(1, 6, one)), 0.2)
                           .value()
                           .item();
  Outcome o;
  o.pass = worst_single < 1e-12 && worst_singleton == 0.0 && worst_gamma0 < 1e-12 && mi_n1 == 0.0;
  o.detail = "|cmi-mi| one cluster " + fmt("%.1e", worst_single) + ", cmi singletons " + fmt("%.1e", worst_singleton) +
             ", |rob(gamma=0)-mi| " + fmt("%.1e", worst_gamma0) + ", mi(n=1) " + fmt("%g", mi_n1);
  return o;
}

// 4. Two-domain special case.
Outcome special_case() {
  Clock clock;
  const CaseResult r = appendix_case(0.1, 1000000, 0);
  const double secs = clock.seconds();
  const double z = std::abs(r.align_estimate - r.align_analytic) / r.align_std_error;
  Outcome o;
  o.pass = r.risk_c0 == 0.0 && std::abs(r.risk_c_inv_t - 0.25) <= 0.01 && z <= 3.0 && secs < 30.0;
  o.detail = "risk_c0 " + fmt("%g", r.risk_c0) + ", risk_c_inv_t " + fmt("%.4f", r.risk_c_inv_t) + ", align " +
             fmt("%.6f", r.align_estimate) + " vs 2t^2 = 0.02 (" + fmt("%.2f", z) + " SE), " + fmt("%.1f", secs) +
             " s";
  return o;
}

// 5. Adversarial inner loop contracts.
Outcome adversarial_contracts() {
  Rng rng(5);
  double worst_norm = 0.0, worst_grad = 0.0, worst_drop = 0.0;
  for (int i = 0; i < 20; ++i) {
    test::AdversarialInstance in = test::random_adversarial_instance(rng);
    Rng adv(i);
    in.cfg.ascent_step_size = 1e-3;
    const AdversarialResult a = adversarial_step(in.view_a, in.view_b, in.model, in.prototypes, in.cfg, adv);
    for (std::size_t t = 1; t < a.deltas.size(); ++t)
      worst_norm = std::max(worst_norm,
                            std::abs(kernels::frobenius_norm(kernels::sub(a.deltas[t], a.deltas[t - 1])) - 1e-3));

    in.cfg.ascent_step_size = 0.0;
    const AdversarialResult z = adversarial_step(in.view_a, in.view_b, in.model, in.prototypes, in.cfg, adv);
    const std::vector<Tensor> plain = test::plain_robust_gradient(in);
    for (std::size_t p = 0; p < plain.size(); ++p)
      worst_grad = std::max(worst_grad, kernels::max_abs_diff(plain[p], z.grads[p]));

    in.cfg.ascent_step_size = 1e-5;
    const AdversarialResult s = adversarial_step(in.view_a, in.view_b, in.model, in.prototypes, in.cfg, adv);
    double prev = test::robust_loss_at(in, s.deltas[0]);
    for (std::size_t t = 1; t < s.deltas.size(); ++t) {
      const double cur = test::robust_loss_at(in, s.deltas[t]);
      worst_drop = std::max(worst_drop, prev - cur);
      prev = cur;
    }
  }
  Outcome o;
  o.pass = worst_norm < 1e-12 && worst_grad < 1e-10 && worst_drop <= 1e-8;
  o.detail = "| ||step||_F - eps | " + fmt("%.1e", worst_norm) + ", eps=0 grad diff " + fmt("%.1e", worst_grad) +
             ", largest loss drop at eps=1e-5 " + fmt("%.1e", worst_drop) + " (20 instances)";
  return o;
}

RunConfig cbas_concept_config() {
  RunConfig cfg = load_config(fs::path(SHIFTGCL_SOURCE_DIR) / "configs" / "cbas_concept.json");
  cfg.dataset.reset();
  return cfg;
}

// 6. Directional ablation on the concept-shift house benchmark.
Outcome ablation_direction(const fs::path& scratch) {
  const Dataset data = generate_cbas({});
  const RunConfig base = cbas_concept_config();
  double slowest = 0.0;
  std::vector<double> means;
  std::string per_variant;
  for (Variant v : kAllVariants) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      RunConfig cfg = base;
      cfg.train.seed = seed;
      Clock clock;
      const json r = run_pretrain(
          {cfg, "cbas", scratch / "ablation" / (variant_name(v) + "_seed" + std::to_string(seed)), v, true}, data);
      slowest = std::max(slowest, clock.seconds());
      sum += r["ood_test"]["accuracy"].get<double>();
    }
    means.push_back(sum / 5.0);
    per_variant += variant_name(v) + " " + fmt("%.4f", means.back()) + ", ";
  }
  const double majority = 300.0 / 700.0;
  bool all_above = true;
  for (double m : means) all_above = all_above && m >= majority + 0.10;
  Outcome o;
  o.pass = means[0] >= means[3] && all_above && slowest < 600.0;
  o.detail = "mean OOD acc " + per_variant + "floor " + fmt("%.4f", majority + 0.10) + ", slowest run " +
             fmt("%.1f", slowest) + " s";
  return o;
}

// 7. Byte-identical results from two complete pretrain commands.
Outcome determinism(const fs::path& scratch) {
  const fs::path dataset = scratch / "cbas.json";
  save_dataset(generate_cbas({}), dataset);
  PretrainArgs args;
  args.config = cbas_concept_config();
  args.dataset_path = dataset;
  args.force = true;
  args.out_dir = scratch / "run_a";
  cmd_pretrain(args);
  args.out_dir = scratch / "run_b";
  cmd_pretrain(args);
  const std::string a = read_file(scratch / "run_a" / "results.json");
  const std::string b = read_file(scratch / "run_b" / "results.json");
  Outcome o;
  o.pass = !a.empty() && a == b;
  o.detail = "results.json " + std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different");
  return o;
}

// 8. Generator fidelity.
Outcome generator_fidelity() {
  const Dataset d = generate_cbas({});
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t y : d.labels) ++counts.at(y);
  const bool cbas_ok = d.graph.num_nodes() == 700 && counts == std::vector<std::size_t>{80, 160, 160, 300};

  const SpuriousParams sp;
  const auto envs = generate_spurious(sp);
  bool same = envs.size() == 10, differ = true;
  for (const auto& e : envs) {
    same = same && e.dataset.labels == envs[0].dataset.labels;
    for (std::size_t v = 0; v < sp.n_nodes; ++v)
      for (std::size_t c = 0; c < sp.d1; ++c)
        same = same && e.dataset.graph.features()(v, c) == envs[0].dataset.graph.features()(v, c);
  }
  for (std::size_t a = 0; a < envs.size(); ++a)
    for (std::size_t b = a + 1; b < envs.size(); ++b) {
      double diff = 0.0;
      for (std::size_t v = 0; v < sp.n_nodes; ++v)
        for (std::size_t c = sp.d1; c < sp.d1 + sp.d2; ++c)
          diff = std::max(diff, std::abs(envs[a].dataset.graph.features()(v, c) - envs[b].dataset.graph.features()(v, c)));
      differ = differ && diff > 0.0;
    }
  Outcome o;
  o.pass = cbas_ok && same && differ;
  o.detail = "cbas nodes " + std::to_string(d.graph.num_nodes()) + " classes {" + std::to_string(counts[0]) + ", " +
             std::to_string(counts[1]) + ", " + std::to_string(counts[2]) + ", " + std::to_string(counts[3]) +
             "}; spurious envs " + std::to_string(envs.size()) + ", shared labels/X1 " + (same ? "yes" : "no") +
             ", X2 pairwise distinct " + (differ ? "yes" : "no");
  return o;
}

// 9. Linear probe and metric identities.
Outcome probe_sanity() {
  Rng rng(9);
  const std::size_t n = 100;
  Tensor x(n, 2);
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 2;
    const double centre = y[i] == 0 ? -2.0 : 2.0;
    x(i, 0) = centre + 0.3 * rng.normal();
    x(i, 1) = centre + 0.3 * rng.normal();
  }
  const LinearClassifier clf = linear_probe(x, y, Mask(n, true), 2, {200, 0.1, 0});
  const auto pred = clf.predict(x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < n; ++i) ok += pred[i] == y[i];
  const double train_acc = static_cast<double>(ok) / static_cast<double>(n);

  std::vector<double> perfect_scores(y.begin(), y.end());
  const Metrics perfect = metric_suite(y, perfect_scores, y);
  const bool perfect_ok = perfect.accuracy == 1.0 && perfect.macro_f1 == 1.0 && perfect.roc_auc == 1.0;

  bool symmetric = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + rng.below(300);
    std::vector<double> s(m), r(m);
    Labels b(m);
    for (std::size_t i = 0; i < m; ++i) {
      s[i] = rng.below(4) == 0 ? 0.5 : rng.uniform();
      r[i] = -s[i];
      b[i] = i == 0 ? 0 : i == 1 ? 1 : rng.below(2);
    }
    symmetric = symmetric && roc_auc(r, b) == 1.0 - roc_auc(s, b);
  }
  Outcome o;
  o.pass = train_acc >= 0.99 && perfect_ok && symmetric;
  o.detail = "separable train acc " + fmt("%.3f", train_acc) + ", perfect metrics " + (perfect_ok ? "1.0" : "not 1.0") +
             ", AUC reversal exact on 200 cases " + (symmetric ? "yes" : "no");
  return o;
}

}  // namespace
}  // namespace shiftgcl

int main() {
  using namespace shiftgcl;
  tune_allocator();
  const auto scratch = test::scratch_dir("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"autodiff soundness", autodiff_soundness},
      {"sinkhorn marginals", sinkhorn_marginals},
      {"loss degeneracies", loss_degeneracies},
      {"two-domain special case", special_case},
      {"adversarial step contracts", adversarial_contracts},
      {"ablation direction", [&] { return ablation_direction(scratch); }},
      {"determinism", [&] { return determinism(scratch); }},
      {"generator fidelity", generator_fidelity},
      {"probe sanity", probe_sanity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
