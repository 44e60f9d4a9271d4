#include "shiftgcl/training.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace shiftgcl {

using nlohmann::json;
namespace k = kernels;

ObjectiveConfig TrainConfig::objective() const {
  return ObjectiveConfig{tau, gamma, sinkhorn_lambda, sinkhorn_iters};
}

EncoderConfig TrainConfig::encoder_config(std::size_t input_dim) const {
  return EncoderConfig{encoder, num_layers, input_dim, hidden_dim};
}

void TrainConfig::validate() const {
  if (num_layers < 1 || hidden_dim < 1) throw std::invalid_argument("encoder needs >= 1 layer and width");
  if (!(lr >= 0.0) || !(prototype_lr >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
  if (prototype_steps < 1) throw std::invalid_argument("prototype_steps must be >= 1");
  if (ascent_steps < 1) throw std::invalid_argument("ascent_steps must be >= 1");
  if (!(ascent_step_size >= 0.0)) throw std::invalid_argument("ascent_step_size must be >= 0");
  if (num_prototypes < 1) throw std::invalid_argument("num_prototypes must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  objective().validate();
  view1.validate();
  view2.validate();
}

std::vector<double> update_prototypes(const Tensor& z_a, const Tensor& z_b, Prototypes& prototypes,
                                      const TrainConfig& cfg) {
  const double n = static_cast<double>(z_a.rows());
  const Tensor q_a = k::scale(
      sinkhorn(k::matmul(z_a, prototypes.centers()), cfg.sinkhorn_lambda, cfg.sinkhorn_iters), n);
  const Tensor q_b = k::scale(
      sinkhorn(k::matmul(z_b, prototypes.centers()), cfg.sinkhorn_lambda, cfg.sinkhorn_iters), n);

  std::vector<double> losses;
  for (std::size_t step = 0; step <= cfg.prototype_steps; ++step) {
    Tape tape;
    Var c = tape.leaf(prototypes.centers());
    Var loss = swapped_prediction_loss(tape.constant(z_a), tape.constant(z_b), c, q_a, q_b);
    losses.push_back(loss.value().item());
    if (step == cfg.prototype_steps || cfg.prototype_lr == 0.0) continue;
    const Tensor grad = tape.backward(loss).of(c);
    Tensor& centers = prototypes.mutable_centers();
    for (std::size_t i = 0; i < centers.size(); ++i) centers[i] -= cfg.prototype_lr * grad[i];
    prototypes.renormalize();
  }
  return losses;
}

AdversarialResult adversarial_step(const Graph& view_a, const Graph& view_b, const Model& model,
                                   const Prototypes& prototypes, const TrainConfig& cfg, Rng& rng) {
  const std::size_t steps = cfg.ascent_steps;
  const double eps = cfg.ascent_step_size;
  const ObjectiveConfig obj = cfg.objective();
  const SparseMatrix prop_a = propagation_for(view_a, model.config.kind);
  const SparseMatrix prop_b = propagation_for(view_b, model.config.kind);

  Tensor delta(view_a.num_nodes(), view_a.feature_dim());
  for (double& v : delta.data()) v = rng.uniform(-eps, eps);

  AdversarialResult out;
  out.deltas.push_back(delta);
  const double inv_steps = 1.0 / static_cast<double>(steps);
  for (std::size_t t = 1; t <= steps; ++t) {
    Tape tape;
    ModelVars vars = bind(tape, model);
    Var d = tape.leaf(delta);
    Var x_a = add(tape.constant(view_a.features()), d);
    Var z_a = project(encode(prop_a, x_a, vars, model.config), vars);
    Var z_b = project(encode(prop_b, tape.constant(view_b.features()), vars, model.config), vars);
    const PseudoLabels labels = pseudo_labels(z_a.value(), prototypes.centers());
    RobustTerms terms = robust_terms(z_a, z_b, labels, obj);
    out.loss_mi = terms.mi.value().item();
    out.loss_cmi = terms.cmi.value().item();
    out.loss_rob = terms.loss.value().item();
    out.step_losses.push_back(out.loss_rob);

    const std::vector<Var> params = vars.all();
    Gradients grads = tape.backward(terms.loss);
    if (out.grads.empty()) {
      for (const Var& p : params) out.grads.emplace_back(grads.of(p).rows(), grads.of(p).cols());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& g = grads.of(params[i]);
      for (std::size_t j = 0; j < g.size(); ++j) out.grads[i][j] += inv_steps * g[j];
    }

    const Tensor& g_delta = grads.of(d);
    const double norm = k::frobenius_norm(g_delta);
    if (norm > 0.0) {
      for (std::size_t j = 0; j < delta.size(); ++j) delta[j] += eps * g_delta[j] / norm;
    }
    out.deltas.push_back(delta);
  }
  return out;
}

namespace {

json tensor_to_json(const Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.values()}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

json checkpoint_to_json(const Checkpoint& c) {
  json tensors = json::array();
  for (const auto& [name, t] : c.model.named_params()) {
    json entry = tensor_to_json(*t);
    entry["name"] = name;
    tensors.push_back(std::move(entry));
  }
  json prototypes = tensor_to_json(c.prototypes.centers());
  prototypes["name"] = "prototypes";
  tensors.push_back(std::move(prototypes));
  return {{"config_digest", c.config_digest},
          {"epoch", c.epoch},
          {"rng_state", c.rng_state},
          {"encoder",
           {{"kind", encoder_kind_name(c.model.config.kind)},
            {"num_layers", c.model.config.num_layers},
            {"input_dim", c.model.config.input_dim},
            {"hidden_dim", c.model.config.hidden_dim}}},
          {"tensors", std::move(tensors)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  c.config_digest = j.at("config_digest").get<std::string>();
  c.epoch = j.at("epoch").get<std::size_t>();
  c.rng_state = j.at("rng_state").get<std::string>();
  const json& enc = j.at("encoder");
  EncoderConfig cfg{parse_encoder_kind(enc.at("kind").get<std::string>()),
                    enc.at("num_layers").get<std::size_t>(), enc.at("input_dim").get<std::size_t>(),
                    enc.at("hidden_dim").get<std::size_t>()};
  c.model = init_params(cfg, 0);
  std::map<std::string, Tensor> by_name;
  for (const json& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = tensor_from_json(t);
  for (auto& [name, ptr] : c.model.named_params()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("checkpoint: missing tensor '" + name + "'");
    if (!it->second.same_shape(*ptr)) {
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + it->second.shape_str() +
                       ", expected " + ptr->shape_str());
    }
    *ptr = std::move(it->second);
  }
  auto it = by_name.find("prototypes");
  if (it == by_name.end()) throw std::invalid_argument("checkpoint: missing tensor 'prototypes'");
  c.prototypes = Prototypes(std::move(it->second));
  return c;
}

json epoch_log_to_json(const EpochLog& e) {
  json j = {{"epoch", e.epoch},
            {"loss_mi", e.loss_mi},
            {"loss_cmi", e.loss_cmi},
            {"loss_rob", e.loss_rob},
            {"loss_clu", e.loss_clu}};
  if (e.id_val_metric) j["id_val_metric"] = *e.id_val_metric;
  if (e.ood_val_metric) j["ood_val_metric"] = *e.ood_val_metric;
  return j;
}

EvalRecord evaluate_model(const Model& model, const Dataset& data, const ProbeConfig& probe,
                          std::size_t epoch) {
  const Tensor embeddings = encode(data.graph, model);
  if (!embeddings.all_finite()) {
    throw NumericalError("epoch " + std::to_string(epoch) + ": non-finite embeddings at evaluation");
  }
  const LinearClassifier clf =
      linear_probe(embeddings, data.labels, data.masks.train, data.num_classes(), probe);
  return EvalRecord{epoch, evaluate(clf, embeddings, data.labels, data.masks)};
}

namespace {

Tensor forward_detached(const Graph& g, const Model& model) {
  return project(encode(g, model), model);
}

bool params_finite(const Model& m, const Prototypes& p) {
  for (const auto& [name, t] : m.named_params())
    if (!t->all_finite()) return false;
  return p.centers().all_finite();
}

std::string describe(const EpochLog& e) {
  std::ostringstream os;
  os << "epoch " << e.epoch << ": non-finite values (loss_mi=" << e.loss_mi
     << ", loss_cmi=" << e.loss_cmi << ", loss_rob=" << e.loss_rob << ", loss_clu=" << e.loss_clu
     << ")";
  return os.str();
}

}  // namespace

PretrainResult pretrain(const Dataset& data, const TrainConfig& cfg, const ProbeConfig& probe,
                        const std::string& config_digest) {
  cfg.validate();
  probe.validate();
  data.validate();
  if (mask_indices(data.masks.train).empty()) {
    throw std::invalid_argument("pretrain: dataset has an empty train split");
  }

  Rng root(cfg.seed);
  Model model = init_params(cfg.encoder_config(data.graph.feature_dim()), root.next_u64());
  Rng proto_rng = root.fork();
  Prototypes prototypes = Prototypes::random(cfg.hidden_dim, cfg.num_prototypes, proto_rng);
  Rng aug_rng = root.fork();
  Rng adv_rng = root.fork();
  OptimizerState opt;
  const std::size_t num_classes = data.num_classes();

  auto snapshot = [&](std::size_t epoch) {
    return Checkpoint{model, prototypes, epoch, aug_rng.state() + "|" + adv_rng.state(), config_digest};
  };

  PretrainResult result;
  std::optional<double> best_id, best_ood;
  auto consider = [&](std::size_t epoch, EpochLog* log) {
    EvalRecord rec = evaluate_model(model, data, probe, epoch);
    if (rec.metrics.id_val) {
      const double s = selection_score(*rec.metrics.id_val, num_classes);
      if (log) log->id_val_metric = s;
      if (!best_id || s > *best_id) {
        best_id = s;
        result.best_id = snapshot(epoch);
        result.best_id_eval = rec;
      }
    }
    if (rec.metrics.ood_val) {
      const double s = selection_score(*rec.metrics.ood_val, num_classes);
      if (log) log->ood_val_metric = s;
      if (!best_ood || s > *best_ood) {
        best_ood = s;
        result.best_ood = snapshot(epoch);
        result.best_ood_eval = rec;
      }
    }
    if (!best_id) {
      result.best_id = snapshot(epoch);
      result.best_id_eval = rec;
    }
    if (!best_ood) {
      result.best_ood = snapshot(epoch);
      result.best_ood_eval = rec;
    }
  };

  consider(0, nullptr);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Graph view_a = sample_view(data.graph, cfg.view1, aug_rng);
    const Graph view_b = sample_view(data.graph, cfg.view2, aug_rng);

    EpochLog log;
    log.epoch = epoch;
    const Tensor z_a = forward_detached(view_a, model), z_b = forward_detached(view_b, model);
    if (!z_a.all_finite() || !z_b.all_finite()) {
      log.loss_mi = log.loss_cmi = log.loss_rob = log.loss_clu = std::nan("");
      throw NumericalError(describe(log));
    }
    const std::vector<double> clu = update_prototypes(z_a, z_b, prototypes, cfg);
    log.loss_clu = clu.back();

    AdversarialResult adv = adversarial_step(view_a, view_b, model, prototypes, cfg, adv_rng);
    log.loss_mi = adv.loss_mi;
    log.loss_cmi = adv.loss_cmi;
    log.loss_rob = adv.loss_rob;
    bool finite = std::isfinite(log.loss_mi) && std::isfinite(log.loss_cmi) &&
                  std::isfinite(log.loss_rob) && std::isfinite(log.loss_clu);
    for (const Tensor& g : adv.grads) finite = finite && g.all_finite();
    if (!finite) throw NumericalError(describe(log));

    std::vector<Tensor*> params;
    for (auto& [name, t] : model.named_params()) params.push_back(t);
    adam_update(params, adv.grads, opt, cfg.lr);
    if (!params_finite(model, prototypes)) throw NumericalError(describe(log));

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) consider(epoch, &log);
    result.log.push_back(log);
  }
  return result;
}

}  // namespace shiftgcl
