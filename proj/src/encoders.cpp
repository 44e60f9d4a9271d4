#include "shiftgcl/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace shiftgcl {

std::string_view encoder_kind_name(EncoderKind kind) {
  return kind == EncoderKind::kGcn ? "gcn" : "sage-mean";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "gcn") return EncoderKind::kGcn;
  if (name == "sage-mean") return EncoderKind::kSageMean;
  throw std::invalid_argument("unknown encoder kind '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("EncoderConfig: num_layers must be >= 1");
  if (input_dim == 0 || hidden_dim == 0) {
    throw std::invalid_argument("EncoderConfig: input_dim and hidden_dim must be positive");
  }
}

namespace {

template <typename M, typename T>
std::vector<std::pair<std::string, T*>> collect_params(M& m) {
  std::vector<std::pair<std::string, T*>> out;
  for (std::size_t l = 0; l < m.encoder.weights.size(); ++l) {
    out.emplace_back("encoder." + std::to_string(l) + ".weight", &m.encoder.weights[l]);
  }
  for (std::size_t l = 0; l < m.encoder.neighbor_weights.size(); ++l) {
    out.emplace_back("encoder." + std::to_string(l) + ".neighbor_weight",
                     &m.encoder.neighbor_weights[l]);
  }
  out.emplace_back("projector.w1", &m.projector.w1);
  out.emplace_back("projector.w2", &m.projector.w2);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> Model::named_params() {
  return collect_params<Model, Tensor>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_params() const {
  return collect_params<const Model, const Tensor>(*this);
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-a, a);
  return w;
}

Model init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model m;
  m.config = config;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim : config.hidden_dim;
    m.encoder.weights.push_back(glorot_uniform(in, config.hidden_dim, rng));
    if (config.kind == EncoderKind::kSageMean) {
      m.encoder.neighbor_weights.push_back(glorot_uniform(in, config.hidden_dim, rng));
    }
  }
  m.projector.w1 = glorot_uniform(config.hidden_dim, config.hidden_dim, rng);
  m.projector.w2 = glorot_uniform(config.hidden_dim, config.hidden_dim, rng);
  return m;
}

SparseMatrix propagation_for(const Graph& g, EncoderKind kind) {
  return kind == EncoderKind::kGcn ? normalized_adjacency(g) : mean_adjacency(g);
}

std::vector<Var> ModelVars::all() const {
  std::vector<Var> out = weights;
  out.insert(out.end(), neighbor_weights.begin(), neighbor_weights.end());
  out.push_back(proj_w1);
  out.push_back(proj_w2);
  return out;
}

ModelVars bind(Tape& tape, const Model& model, bool trainable) {
  auto put = [&](const Tensor& w) { return trainable ? tape.leaf(w) : tape.constant(w); };
  ModelVars v;
  for (const Tensor& w : model.encoder.weights) v.weights.push_back(put(w));
  for (const Tensor& w : model.encoder.neighbor_weights) v.neighbor_weights.push_back(put(w));
  v.proj_w1 = put(model.projector.w1);
  v.proj_w2 = put(model.projector.w2);
  return v;
}

Var encode(const SparseMatrix& propagation, const Var& x, const ModelVars& vars,
           const EncoderConfig& config) {
  if (x.cols() != config.input_dim) {
    throw ShapeError("encode: features have " + std::to_string(x.cols()) +
                     " columns, encoder expects " + std::to_string(config.input_dim));
  }
  if (vars.weights.size() != config.num_layers) {
    throw std::invalid_argument("encode: parameter count does not match num_layers");
  }
  Var h = x;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    if (config.kind == EncoderKind::kGcn) {
      // (A H) W is cheaper than A (H W) only when the input is narrower.
      h = h.cols() <= vars.weights[l].cols() ? matmul(spmm(propagation, h), vars.weights[l])
                                            : spmm(propagation, matmul(h, vars.weights[l]));
    } else {
      h = add(matmul(h, vars.weights[l]), matmul(spmm(propagation, h), vars.neighbor_weights[l]));
    }
    if (l + 1 < config.num_layers) h = relu(h);
  }
  return h;
}

Var project(const Var& h, const ModelVars& vars) {
  if (h.cols() != vars.proj_w1.rows()) {
    throw ShapeError("project: input " + h.value().shape_str() + " vs projector " +
                     vars.proj_w1.value().shape_str());
  }
  return row_l2_normalize(matmul(relu(matmul(h, vars.proj_w1)), vars.proj_w2));
}

Tensor encode(const Graph& g, const Model& model) {
  Tape tape;
  ModelVars vars = bind(tape, model, false);
  Var x = tape.constant(g.features());
  return encode(propagation_for(g, model.config.kind), x, vars, model.config).value();
}

Tensor project(const Tensor& h, const Model& model) {
  Tape tape;
  ModelVars vars = bind(tape, model, false);
  return project(tape.constant(h), vars).value();
}

}  // namespace shiftgcl
