#pragma once

#include <array>
#include <span>
#include <string>

#include "hnav/context.hpp"
#include "hnav/env.hpp"
#include "hnav/nn.hpp"

namespace hnav {

struct ModelConfig {
  int d = 32;            // latent dimension
  int h_f = 64;          // transition-net hidden width
  int enc_hidden = 128;  // encoder hidden width
  int trunk_hidden = 256;
  int embed = 128;       // context embedding width (shared trunk output)
  int pred_hidden = 128;
  int nc = 13;           // context resolution
  int map_size = 13;     // for observation normalization
  double v_max_value = 40.0;  // value squash bound == episode timeout
  double v_max_step = 50.0;   // units per env-step, velocity normalizer
};

// Flat size of the generated transition-net weights for a single hidden
// layer mapping (d + 6 one-hot action) -> h_f -> (d next-state + 1 reward).
inline int phi_size(int d, int h_f) {
  return (d + 6 + 1) * h_f + (h_f + 1) * (d + 1);
}
// Independent count used to cross-check phi_size in tests: walks the layer
// map tensor by tensor.
int phi_size_by_layer_map(int d, int h_f);

inline int context_input_size(int nc) { return 4 * nc * nc; }

// Observations enter the encoder normalized: positions / (map extent),
// angles as sin/cos pairs, velocities / v_max. 3 + 6 + 6 = 15 inputs.
inline constexpr int kEncoderInput = 15;
std::array<float, kEncoderInput> normalize_obs(const JointState& o,
                                               int map_size,
                                               double v_max_step = 50.0);

// Registers every tensor of the hypermodel (encoder, shared context trunk,
// weight-emitting head, prediction head) with zero values.
template <typename T>
void register_hypermodel(ParamStoreT<T>& store, const ModelConfig& cfg) {
  const int in = kEncoderInput;
  const int ctx_in = context_input_size(cfg.nc);
  const int np = phi_size(cfg.d, cfg.h_f);
  store.add("enc.w1", {in, cfg.enc_hidden});
  store.add("enc.b1", {cfg.enc_hidden});
  store.add("enc.w2", {cfg.enc_hidden, cfg.d});
  store.add("enc.b2", {cfg.d});
  store.add("trunk.w1", {ctx_in, cfg.trunk_hidden});
  store.add("trunk.b1", {cfg.trunk_hidden});
  store.add("trunk.w2", {cfg.trunk_hidden, cfg.embed});
  store.add("trunk.b2", {cfg.embed});
  store.add("hyper.w", {cfg.embed, np});
  store.add("hyper.b", {np});
  store.add("pred.w1", {cfg.d + cfg.embed, cfg.pred_hidden});
  store.add("pred.b1", {cfg.pred_hidden});
  store.add("pred.w2", {cfg.pred_hidden, kNumActions + 1});
  store.add("pred.b2", {kNumActions + 1});
}

// Full model stack with a float fast path for acting and evaluation.
// The weight-emitting head starts at zero with its bias holding a shared
// default transition net, so at step 0 every context maps to the same phi.
class Hypermodel {
 public:
  explicit Hypermodel(const ModelConfig& cfg);

  void init(Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int num_phi() const { return phi_size(cfg_.d, cfg_.h_f); }

  // Latent from a normalized 15-vector; infinity-norm at most 1.
  void encode(std::span<const float> obs_norm, std::span<float> s_out) const;
  // Context embedding from the shared trunk.
  void context_embed(const TaskContext& ctx, std::span<float> e_out) const;
  void context_embed(std::span<const float> ctx_flat,
                     std::span<float> e_out) const;
  // Transition-net weights for one context embedding.
  void hyper(std::span<const float> e_embed, std::span<float> phi_out) const;
  // One latent step under generated weights phi.
  void transition(std::span<const float> phi, std::span<const float> s,
                  int action, std::span<float> s_next_out,
                  float& reward_out) const;
  // Policy logits and squashed value in [-v_max_value, 0].
  void predict(std::span<const float> s, std::span<const float> e_embed,
               std::span<float> logits_out, float& value_out) const;

  // Human-readable layer map of phi, written into checkpoint metadata.
  std::string phi_layout() const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

void softmax(std::span<const float> logits, std::span<float> probs_out);

}  // namespace hnav
