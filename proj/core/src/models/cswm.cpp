#include "slotlab/models/cswm.hpp"

#include <array>

#include "slotlab/error.hpp"

namespace slotlab::models {

using nlohmann::json;

std::size_t CswmConfig::map_size() const {
  if (env == envs::EnvKind::kThreeBody) return image_size / 5;
  return image_size / envs::kCellPixels;
}

json CswmConfig::ToJson() const {
  return {{"env", std::string(envs::EnvName(env))},
          {"channels", channels},
          {"image_size", image_size},
          {"num_slots", num_slots},
          {"latent_dim", latent_dim},
          {"hidden", hidden},
          {"edge_dim", edge_dim},
          {"conv_channels", conv_channels},
          {"grid_hidden", grid_hidden},
          {"gamma", gamma},
          {"sigma", sigma}};
}

CswmConfig CswmConfig::FromJson(const json& j) {
  try {
    CswmConfig c;
    c.env = envs::ParseEnvKind(j.at("env").get<std::string>());
    c.channels = j.at("channels").get<std::size_t>();
    c.image_size = j.at("image_size").get<std::size_t>();
    c.num_slots = j.at("num_slots").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.edge_dim = j.at("edge_dim").get<std::size_t>();
    c.conv_channels = j.at("conv_channels").get<std::size_t>();
    c.grid_hidden = j.value("grid_hidden", std::size_t{0});
    c.gamma = j.at("gamma").get<double>();
    c.sigma = j.at("sigma").get<double>();
    return c;
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("malformed model config: ") + e.what());
  }
}

CswmConfig DefaultCswmConfig(const envs::EnvSpec& env, std::size_t num_slots) {
  CswmConfig c;
  c.env = env.kind;
  c.channels = env.channels();
  c.image_size = env.image_size();
  c.num_slots = num_slots;
  c.latent_dim = env.kind == envs::EnvKind::kThreeBody ? 4 : 2;
  return c;
}

template <typename T>
CswmModel<T>::CswmModel(const CswmConfig& config, std::uint64_t seed) : config_(config) {
  Require(config.num_slots >= 1 && config.latent_dim >= 1, ErrorCategory::kConfig, "model needs K >= 1 and D >= 1");
  Require(config.hidden >= 2 && config.edge_dim >= 2, ErrorCategory::kConfig, "hidden widths must be >= 2");
  Rng rng(seed);
  const std::size_t K = config.num_slots;
  if (config.env == envs::EnvKind::kThreeBody) {
    Require(config.image_size % 5 == 0, ErrorCategory::kConfig, "three-body image size must be a multiple of 5");
    extractor_.push_back(MakeConv(params_, "extractor.0", config.channels, config.conv_channels, 9, 1, 4, rng));
    extractor_.push_back(MakeConv(params_, "extractor.1", config.conv_channels, K, 5, 5, 0, rng));
  } else {
    Require(config.image_size % envs::kCellPixels == 0, ErrorCategory::kConfig,
            "grid image size must be a multiple of the cell size");
    if (config.grid_hidden == 0) {
      extractor_.push_back(
          MakeConv(params_, "extractor.0", config.channels, K, envs::kCellPixels, envs::kCellPixels, 0, rng));
    } else {
      extractor_.push_back(MakeConv(params_, "extractor.0", config.channels, config.grid_hidden, envs::kCellPixels,
                                    envs::kCellPixels, 0, rng));
      extractor_.push_back(MakeConv(params_, "extractor.1", config.grid_hidden, K, 1, 1, 0, rng));
    }
  }
  const std::size_t map = config.map_size() * config.map_size();
  const std::size_t D = config.latent_dim;
  enc1_ = MakeDense(params_, "encoder.0", map, config.hidden, rng);
  enc_norm_ = MakeNorm(params_, "encoder.norm", config.hidden);
  enc2_ = MakeDense(params_, "encoder.1", config.hidden, D, rng);
  // First edge layer acting on [z_i, z_j], stored as its z_i and z_j halves.
  edge_source_.weight = params_.Add("edge.0.source", FanInUniform<T>({config.hidden, D}, 2 * D, rng));
  edge_target_weight_ = params_.Add("edge.0.target", FanInUniform<T>({config.hidden, D}, 2 * D, rng));
  edge_source_.bias = params_.Add("edge.0.bias", FanInUniform<T>({config.hidden}, 2 * D, rng));
  edge_norm_ = MakeNorm(params_, "edge.norm", config.hidden);
  edge2_ = MakeDense(params_, "edge.1", config.hidden, config.edge_dim, rng);
  node1_ = MakeDense(params_, "node.0", D + kActionsPerObject + config.edge_dim, config.hidden, rng);
  node_norm_ = MakeNorm(params_, "node.norm", config.hidden);
  node2_ = MakeDense(params_, "node.1", config.hidden, D, rng, /*zero=*/true);
}

template <typename T>
void CswmModel<T>::CheckObs(const Tensor<T>& obs) const {
  const Shape& s = obs.shape();
  if (s.size() != 4 || s[1] != config_.channels || s[2] != config_.image_size || s[3] != config_.image_size) {
    Fail(ErrorCategory::kDimension, "observation batch " + ShapeString(s) + " does not match [B," +
                                        std::to_string(config_.channels) + "," + std::to_string(config_.image_size) +
                                        "," + std::to_string(config_.image_size) + "]");
  }
}

template <typename T>
Tensor<T> CswmModel<T>::ExtractMasks(const Tensor<T>& obs) const {
  CheckObs(obs);
  if (extractor_.size() == 1) return Sigmoid(extractor_[0](obs));
  return Sigmoid(extractor_[1](LeakyRelu(extractor_[0](obs))));
}

template <typename T>
Tensor<T> CswmModel<T>::EncodeSlots(const Tensor<T>& masks) const {
  const Shape& s = masks.shape();
  const std::size_t m = config_.map_size();
  if (s.size() != 4 || s[1] != config_.num_slots || s[2] != m || s[3] != m) {
    Fail(ErrorCategory::kDimension, "slot maps " + ShapeString(s) + " do not match the model");
  }
  const Tensor<T> flat = Reshape(masks, {s[0], s[1], m * m});
  return enc2_(Relu(enc_norm_(enc1_(flat))));
}

template <typename T>
Tensor<T> CswmModel<T>::Transition(const Tensor<T>& z, const Tensor<T>& actions) const {
  const std::size_t K = config_.num_slots;
  const std::size_t D = config_.latent_dim;
  if (z.rank() != 3 || z.dim(1) != K || z.dim(2) != D) {
    Fail(ErrorCategory::kDimension, "latent " + ShapeString(z.shape()) + " does not match [B,K,D]");
  }
  const std::size_t B = z.dim(0);
  if (actions.shape() != Shape{B, K, kActionsPerObject}) {
    Fail(ErrorCategory::kDimension, "actions " + ShapeString(actions.shape()) + " do not match [B,K,4]");
  }
  const std::size_t nodes = B * K;
  const Tensor<T> z_rows = Reshape(z, {nodes, D});
  const Tensor<T> a_rows = Reshape(actions, {nodes, kActionsPerObject});

  Tensor<T> aggregate;
  if (K == 1) {
    aggregate = Tensor<T>({nodes, config_.edge_dim});
  } else {
    const Tensor<T> summed = PairwiseNormReluSum(edge_source_(z_rows), Linear(z_rows, edge_target_weight_),
                                                 edge_norm_.gain, edge_norm_.offset, K);
    // The output layer is linear, so mapping the summed hidden activations
    // once equals summing the per-edge outputs.
    aggregate = AddBias(Linear(summed, edge2_.weight), edge2_.bias, static_cast<T>(K - 1));
  }
  const std::array<Tensor<T>, 3> node_in = {z_rows, a_rows, aggregate};
  const Tensor<T> delta = node2_(Relu(node_norm_(node1_(ConcatLastAxis<T>(node_in)))));
  return Reshape(delta, {B, K, D});
}

template <typename T>
Checkpoint CswmModel<T>::ToCheckpoint(const json& extra) const {
  Checkpoint ck;
  ck.preamble = json{{"model", "cswm"}, {"config", config_.ToJson()}, {"extra", extra}}.dump();
  AppendParameters(ck, params_, "model/");
  return ck;
}

template <typename T>
CswmModel<T> CswmModel<T>::FromCheckpoint(const Checkpoint& checkpoint) {
  json pre;
  try {
    pre = json::parse(checkpoint.preamble);
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("checkpoint preamble is not JSON: ") + e.what());
  }
  if (pre.value("model", "") != "cswm") Fail(ErrorCategory::kFormat, "checkpoint does not hold a cswm model");
  CswmModel model(CswmConfig::FromJson(pre.at("config")), 0);
  LoadParameters(checkpoint, model.params_, "model/");
  return model;
}

template <typename T>
Tensor<T> Energy(const Tensor<T>& z_pred, const Tensor<T>& z_target, double sigma) {
  Require(z_pred.shape() == z_target.shape(), ErrorCategory::kDimension, "energy operands differ in shape");
  Require(z_pred.rank() == 3, ErrorCategory::kDimension, "energy expects [B,K,D] latents");
  const std::size_t B = z_pred.dim(0), K = z_pred.dim(1), D = z_pred.dim(2);
  const Tensor<T> sq = SumLastAxis(Reshape(Square(Sub(z_pred, z_target)), {B, K * D}));
  return Scale(sq, static_cast<T>(1.0 / (2.0 * sigma * sigma * static_cast<double>(K))));
}

template <typename T>
Tensor<T> ContrastiveLoss(const Tensor<T>& z, const Tensor<T>& delta, const Tensor<T>& z_next,
                          const Tensor<T>& z_negative, double gamma, double sigma) {
  Require(z.rank() == 3 && z.dim(0) > 0, ErrorCategory::kContract, "contrastive loss needs a non-empty batch");
  const Tensor<T> positive = Energy(Add(z, delta), z_next, sigma);
  const Tensor<T> negative = Energy(z_negative, z_next, sigma);
  const Tensor<T> hinge = Relu(AddScalar(Scale(negative, T{-1}), static_cast<T>(gamma)));
  return Mean(Add(positive, hinge));
}

template <typename T>
Tensor<T> CswmBatchLoss(const CswmModel<T>& model, const Tensor<T>& obs, const Tensor<T>& actions,
                        const Tensor<T>& next_obs, std::span<const std::size_t> negative_order) {
  const Tensor<T> z = model.Encode(obs);
  const Tensor<T> z_next = model.Encode(next_obs);
  const std::size_t B = z.dim(0), K = z.dim(1), D = z.dim(2);
  Require(negative_order.size() == B, ErrorCategory::kContract, "negative order must cover the batch");
  const Tensor<T> z_neg = Reshape(GatherRows(Reshape(z_next, {B, K * D}), negative_order), {B, K, D});
  const Tensor<T> delta = model.Transition(z, actions);
  return ContrastiveLoss(z, delta, z_next, z_neg, model.config().gamma, model.config().sigma);
}

#define SLOTLAB_INSTANTIATE(T)                                                                           \
  template class CswmModel<T>;                                                                          \
  template Tensor<T> Energy<T>(const Tensor<T>&, const Tensor<T>&, double);                             \
  template Tensor<T> ContrastiveLoss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                        const Tensor<T>&, double, double);                              \
  template Tensor<T> CswmBatchLoss<T>(const CswmModel<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                      const Tensor<T>&, std::span<const std::size_t>);
SLOTLAB_INSTANTIATE(float)
SLOTLAB_INSTANTIATE(double)
#undef SLOTLAB_INSTANTIATE

}  // namespace slotlab::models
