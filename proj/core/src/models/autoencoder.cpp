#include "slotlab/models/autoencoder.hpp"

#include <array>

#include "slotlab/error.hpp"

namespace slotlab::models {

using nlohmann::json;

json AeConfig::ToJson() const {
  return {{"env", std::string(envs::EnvName(env))},
          {"channels", channels},
          {"image_size", image_size},
          {"num_slots", num_slots},
          {"latent_dim", latent_dim},
          {"hidden", hidden}};
}

AeConfig AeConfig::FromJson(const json& j) {
  try {
    AeConfig c;
    c.env = envs::ParseEnvKind(j.at("env").get<std::string>());
    c.channels = j.at("channels").get<std::size_t>();
    c.image_size = j.at("image_size").get<std::size_t>();
    c.num_slots = j.at("num_slots").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    return c;
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("malformed model config: ") + e.what());
  }
}

AeConfig DefaultAeConfig(const envs::EnvSpec& env, std::size_t num_slots) {
  const CswmConfig c = DefaultCswmConfig(env, num_slots);
  AeConfig a;
  a.env = c.env;
  a.channels = c.channels;
  a.image_size = c.image_size;
  a.num_slots = c.num_slots;
  a.latent_dim = c.latent_dim;
  return a;
}

template <typename T>
AeModel<T>::AeModel(const AeConfig& config, std::uint64_t seed) : config_(config) {
  Require(config.image_size % envs::kCellPixels == 0, ErrorCategory::kConfig,
          "autoencoder image size must be a multiple of the cell size");
  Require(config.num_slots >= 1 && config.latent_dim >= 1 && config.hidden >= 2, ErrorCategory::kConfig,
          "autoencoder needs K >= 1, D >= 1, hidden >= 2");
  Rng rng(seed);
  const std::size_t K = config.num_slots;
  const std::size_t cells = config.map_size() * config.map_size();
  const std::size_t flat = config.flat_latent();
  const std::size_t p = envs::kCellPixels;
  conv_ = MakeConv(params_, "encoder.conv", config.channels, K, p, p, 0, rng);
  enc1_ = MakeDense(params_, "encoder.0", K * cells, config.hidden, rng);
  enc_norm_ = MakeNorm(params_, "encoder.norm", config.hidden);
  enc2_ = MakeDense(params_, "encoder.1", config.hidden, flat, rng);
  dec1_ = MakeDense(params_, "decoder.0", flat, config.hidden, rng);
  dec_norm_ = MakeNorm(params_, "decoder.norm", config.hidden);
  dec2_ = MakeDense(params_, "decoder.1", config.hidden, K * cells, rng);
  deconv_kernel_ = params_.Add("decoder.deconv.kernel", FanInUniform<T>({K, config.channels, p, p}, K * p * p, rng));
  deconv_bias_ = params_.Add("decoder.deconv.bias", FanInUniform<T>({config.channels}, K * p * p, rng));
  head1_ = MakeDense(params_, "head.0", flat + K * kActionsPerObject, config.hidden, rng);
  head_norm_ = MakeNorm(params_, "head.norm", config.hidden);
  head2_ = MakeDense(params_, "head.1", config.hidden, flat, rng, /*zero=*/true);
}

template <typename T>
Tensor<T> AeModel<T>::ExtractMasks(const Tensor<T>& obs) const {
  const Shape& s = obs.shape();
  if (s.size() != 4 || s[1] != config_.channels || s[2] != config_.image_size || s[3] != config_.image_size) {
    Fail(ErrorCategory::kDimension, "observation batch " + ShapeString(s) + " does not match the autoencoder");
  }
  return Sigmoid(conv_(obs));
}

template <typename T>
Tensor<T> AeModel<T>::Encode(const Tensor<T>& obs) const {
  const Tensor<T> maps = ExtractMasks(obs);
  const std::size_t B = maps.dim(0);
  const Tensor<T> flat = Reshape(maps, {B, maps.size() / B});
  return enc2_(Relu(enc_norm_(enc1_(flat))));
}

template <typename T>
Tensor<T> AeModel<T>::Decode(const Tensor<T>& latent) const {
  Require(latent.rank() == 2 && latent.dim(1) == config_.flat_latent(), ErrorCategory::kDimension,
          "latent does not match [B, K*D]");
  const std::size_t B = latent.dim(0);
  const std::size_t m = config_.map_size();
  const Tensor<T> cells = Relu(dec2_(Relu(dec_norm_(dec1_(latent)))));
  const Tensor<T> grid = Reshape(cells, {B, config_.num_slots, m, m});
  return Sigmoid(ConvTranspose2d(grid, deconv_kernel_, deconv_bias_, envs::kCellPixels, 0));
}

template <typename T>
Tensor<T> AeModel<T>::Transition(const Tensor<T>& latent, const Tensor<T>& actions) const {
  const std::size_t B = latent.dim(0);
  const std::size_t K = config_.num_slots;
  Require(latent.rank() == 2 && latent.dim(1) == config_.flat_latent(), ErrorCategory::kDimension,
          "latent does not match [B, K*D]");
  Require(actions.shape() == Shape{B, K, kActionsPerObject}, ErrorCategory::kDimension,
          "actions do not match [B,K,4]");
  const std::array<Tensor<T>, 2> parts = {latent, Reshape(actions, {B, K * kActionsPerObject})};
  return head2_(Relu(head_norm_(head1_(ConcatLastAxis<T>(parts)))));
}

template <typename T>
Checkpoint AeModel<T>::ToCheckpoint(const json& extra) const {
  Checkpoint ck;
  ck.preamble = json{{"model", "ae"}, {"config", config_.ToJson()}, {"extra", extra}}.dump();
  AppendParameters(ck, params_, "model/");
  return ck;
}

template <typename T>
AeModel<T> AeModel<T>::FromCheckpoint(const Checkpoint& checkpoint) {
  json pre;
  try {
    pre = json::parse(checkpoint.preamble);
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("checkpoint preamble is not JSON: ") + e.what());
  }
  if (pre.value("model", "") != "ae") Fail(ErrorCategory::kFormat, "checkpoint does not hold an autoencoder");
  AeModel model(AeConfig::FromJson(pre.at("config")), 0);
  LoadParameters(checkpoint, model.params_, "model/");
  return model;
}

template <typename T>
Tensor<T> AeLoss(const Tensor<T>& reconstruction, const Tensor<T>& target) {
  Require(reconstruction.shape() == target.shape(), ErrorCategory::kDimension,
          "reconstruction and target differ in shape");
  return MseLoss(reconstruction, target);
}

template <typename T>
Tensor<T> AeBatchLoss(const AeModel<T>& model, const Tensor<T>& obs, const Tensor<T>& actions,
                      const Tensor<T>& next_obs) {
  const Tensor<T> latent = model.Encode(obs);
  const Tensor<T> recon = AeLoss(model.Decode(latent), obs);
  Tensor<T> z_next;
  {
    NoGradScope<T> no_grad;
    z_next = model.Encode(next_obs);
  }
  const Tensor<T> z = latent.Detach();
  const Tensor<T> predicted = Add(z, model.Transition(z, actions));
  return Add(recon, MseLoss(predicted, z_next));
}

#define SLOTLAB_INSTANTIATE(T)                                                                        \
  template class AeModel<T>;                                                                         \
  template Tensor<T> AeLoss<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> AeBatchLoss<T>(const AeModel<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);
SLOTLAB_INSTANTIATE(float)
SLOTLAB_INSTANTIATE(double)
#undef SLOTLAB_INSTANTIATE

}  // namespace slotlab::models
