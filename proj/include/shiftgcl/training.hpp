// Bi-level pretraining loop: prototype descent on the clustering loss,
// adversarial feature ascent with gradient accumulation, and an Adam step
// on the encoder/projector.

#ifndef SHIFTGCL_TRAINING_HPP
#define SHIFTGCL_TRAINING_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftgcl/augmentation.hpp"
#include "shiftgcl/datasets.hpp"
#include "shiftgcl/encoders.hpp"
#include "shiftgcl/evaluation.hpp"
#include "shiftgcl/objectives.hpp"
#include "shiftgcl/optim.hpp"

namespace shiftgcl {

struct TrainConfig {
  EncoderKind encoder = EncoderKind::kGcn;
  std::size_t num_layers = 3;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 100;
  double lr = 1e-3;
  double prototype_lr = 1e-4;
  std::size_t prototype_steps = 10;   // l
  std::size_t ascent_steps = 3;       // M
  double ascent_step_size = 1e-3;     // epsilon
  double gamma = 0.1;
  double tau = 0.2;
  std::size_t num_prototypes = 100;   // K
  double sinkhorn_lambda = 20.0;
  std::size_t sinkhorn_iters = 3;
  ViewParams view1{0.2, 0.2};
  ViewParams view2{0.3, 0.3};
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;

  ObjectiveConfig objective() const;
  EncoderConfig encoder_config(std::size_t input_dim) const;
  void validate() const;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// l steps of projected gradient descent on the swapped-prediction loss with
/// respect to C only. Codes are computed once from the entry prototypes and
/// held fixed across the steps; columns are renormalized after every step.
/// Returns the loss before each step followed by the final loss (l + 1
/// values).
std::vector<double> update_prototypes(const Tensor& z_a, const Tensor& z_b, Prototypes& prototypes,
                                      const TrainConfig& cfg);

struct AdversarialResult {
  /// (1/M) sum_t grad_{theta, omega} L_rob, in Model::named_params() order.
  std::vector<Tensor> grads;
  /// L_rob at delta_{t-1} for t = 1..M.
  std::vector<double> step_losses;
  double loss_mi = 0.0;   // last ascent step
  double loss_cmi = 0.0;
  double loss_rob = 0.0;
  /// delta_0 .. delta_M.
  std::vector<Tensor> deltas;
};

/// Perturbation delta (view-alpha features only) starts U(-eps, eps) per
/// entry and moves by eps * grad / ||grad||_F per ascent step. A zero
/// delta-gradient skips that step's update.
AdversarialResult adversarial_step(const Graph& view_a, const Graph& view_b, const Model& model,
                                   const Prototypes& prototypes, const TrainConfig& cfg, Rng& rng);

struct Checkpoint {
  Model model;
  Prototypes prototypes;
  std::size_t epoch = 0;
  std::string rng_state;
  std::string config_digest;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

struct EpochLog {
  std::size_t epoch = 0;
  double loss_mi = 0.0;
  double loss_cmi = 0.0;
  double loss_rob = 0.0;
  double loss_clu = 0.0;
  std::optional<double> id_val_metric;
  std::optional<double> ood_val_metric;
};

nlohmann::json epoch_log_to_json(const EpochLog& e);

/// Metrics of one checkpoint-selection evaluation.
struct EvalRecord {
  std::size_t epoch = 0;
  SplitMetrics metrics;
};

struct PretrainResult {
  Checkpoint best_id;
  Checkpoint best_ood;
  EvalRecord best_id_eval;
  EvalRecord best_ood_eval;
  std::vector<EpochLog> log;
};

/// Embeds the full graph, fits a probe on the train nodes and scores every
/// split.
EvalRecord evaluate_model(const Model& model, const Dataset& data, const ProbeConfig& probe,
                          std::size_t epoch);

/// Runs the full loop. The initial model is evaluated as epoch 0, then every
/// eval_every epochs and after the last epoch; the best ID-val and OOD-val
/// checkpoints are retained (earliest wins ties). Throws NumericalError on a
/// non-finite loss.
PretrainResult pretrain(const Dataset& data, const TrainConfig& cfg, const ProbeConfig& probe,
                        const std::string& config_digest = "");

}  // namespace shiftgcl

#endif  // SHIFTGCL_TRAINING_HPP
