#pragma once

#include <vector>

#include "hnav/graph.hpp"
#include "hnav/model.hpp"
#include "hnav/tape.hpp"

namespace hnav {

// One training batch in unrolled layout. Step blocks are stacked row-wise:
// obs rows for unroll position k live at [k*B, (k+1)*B). position_mask
// weights the value/policy losses at each position; reward_mask and
// model_mask weight the transition losses for k = 1..K (stored at k-1).
// model_target holds frozen encoder latents (the stop-gradient side).
template <typename T>
struct LossBatch {
  int batch = 0;   // B
  int unroll = 0;  // K
  std::vector<T> ctx;            // [B, 4*nc^2]
  std::vector<T> obs;            // [(K+1)*B, 15]
  std::vector<int> actions;      // [K*B]
  std::vector<T> value_target;   // [(K+1)*B]
  std::vector<T> policy_target;  // [(K+1)*B, 6]
  std::vector<T> reward_target;  // [K*B]
  std::vector<T> position_mask;  // [(K+1)*B]
  std::vector<T> reward_mask;    // [K*B]
  std::vector<T> model_mask;     // [K*B]
  std::vector<T> model_target;   // [K*B, d]
};

template <typename T>
struct LossGraphOut {
  typename Tape<T>::Id total;
  typename Tape<T>::Id value, policy, reward, model;
  std::vector<typename Tape<T>::Id> value_k, policy_k;  // size K+1
  std::vector<typename Tape<T>::Id> reward_k, model_k;  // size K
  std::vector<LeafBinding<T>> leaves;
};

// Unrolled joint loss: from s0 = encode(o_t), apply the generated transition
// net K times; every position pays value MSE + policy cross-entropy, every
// transition pays reward MSE and the auxiliary latent-prediction MSE against
// the frozen encoder target, each gated by its mask.
template <typename T>
LossGraphOut<T> build_loss_graph(Tape<T>& tape, const ParamStoreT<T>& store,
                                 const ModelConfig& cfg, const LossBatch<T>& b,
                                 T lambda_model) {
  using Id = typename Tape<T>::Id;
  const int B = b.batch, K = b.unroll;
  const int d = cfg.d, h = cfg.h_f;
  const int np = phi_size(d, h);

  LossGraphOut<T> out;
  out.leaves = bind_leaves(tape, store);
  auto P = [&](const char* name) { return leaf_of(out.leaves, store, name); };

  Id ctx = tape.constant(B, context_input_size(cfg.nc), b.ctx);

  // Shared trunk -> context embedding -> generated weights.
  Id trunk_h = tape.elu(tape.linear(ctx, P("trunk.w1"), P("trunk.b1")));
  Id embed = tape.elu(tape.linear(trunk_h, P("trunk.w2"), P("trunk.b2")));
  Id phi = tape.linear(embed, P("hyper.w"), P("hyper.b"));

  const int w1_sz = (d + kNumActions) * h;
  Id phi_w1 = tape.slice_cols(phi, 0, w1_sz);
  Id phi_b1 = tape.slice_cols(phi, w1_sz, w1_sz + h);
  Id phi_w2 = tape.slice_cols(phi, w1_sz + h, w1_sz + h + h * (d + 1));
  Id phi_b2 = tape.slice_cols(phi, w1_sz + h + h * (d + 1), np);

  auto obs_block = [&](int k) {
    std::vector<T> rows(b.obs.begin() + std::size_t(k) * B * kEncoderInput,
                        b.obs.begin() +
                            std::size_t(k + 1) * B * kEncoderInput);
    return tape.constant(B, kEncoderInput, rows);
  };
  auto mask_block = [&](const std::vector<T>& m, int k) {
    std::vector<T> rows(m.begin() + std::size_t(k) * B,
                        m.begin() + std::size_t(k + 1) * B);
    return tape.constant(B, 1, rows);
  };

  Id enc_h = tape.elu(tape.linear(obs_block(0), P("enc.w1"), P("enc.b1")));
  Id s = tape.row_unit_maxabs(
      tape.linear(enc_h, P("enc.w2"), P("enc.b2")));

  Id zero = tape.constant(1, 1, std::vector<T>{T(0)});
  Id value_sum = zero, policy_sum = zero, reward_sum = zero, model_sum = zero;

  for (int k = 0; k <= K; ++k) {
    // Prediction head at position k.
    Id pin = tape.concat_cols(s, embed);
    Id ph = tape.elu(tape.linear(pin, P("pred.w1"), P("pred.b1")));
    Id pout = tape.linear(ph, P("pred.w2"), P("pred.b2"));
    Id logits = tape.slice_cols(pout, 0, kNumActions);
    Id vraw = tape.slice_cols(pout, kNumActions, kNumActions + 1);
    Id v = tape.affine(tape.sigmoid(vraw), T(-cfg.v_max_value), T(0));

    Id wpos = mask_block(b.position_mask, k);
    std::vector<T> vt(b.value_target.begin() + std::size_t(k) * B,
                      b.value_target.begin() + std::size_t(k + 1) * B);
    std::vector<T> pt(
        b.policy_target.begin() + std::size_t(k) * B * kNumActions,
        b.policy_target.begin() + std::size_t(k + 1) * B * kNumActions);
    Id lv = tape.weighted_mse(v, tape.constant(B, 1, vt), wpos);
    Id lp = tape.softmax_cross_entropy(
        logits, tape.constant(B, kNumActions, pt), wpos);
    out.value_k.push_back(lv);
    out.policy_k.push_back(lp);
    value_sum = tape.add(value_sum, lv);
    policy_sum = tape.add(policy_sum, lp);

    if (k == K) break;

    // Transition k -> k+1 under the generated weights.
    std::vector<T> onehot(std::size_t(B) * kNumActions, T(0));
    for (int i = 0; i < B; ++i)
      onehot[std::size_t(i) * kNumActions +
             b.actions[std::size_t(k) * B + i]] = T(1);
    Id x = tape.concat_cols(s, tape.constant(B, kNumActions, onehot));
    Id th = tape.elu(tape.add(tape.bmm(x, phi_w1, d + kNumActions, h),
                              phi_b1));
    Id tout = tape.add(tape.bmm(th, phi_w2, h, d + 1), phi_b2);
    Id s_next = tape.row_unit_maxabs(tape.slice_cols(tout, 0, d));
    Id rhat = tape.slice_cols(tout, d, d + 1);

    std::vector<T> rt(b.reward_target.begin() + std::size_t(k) * B,
                      b.reward_target.begin() + std::size_t(k + 1) * B);
    Id lr = tape.weighted_mse(rhat, tape.constant(B, 1, rt),
                              mask_block(b.reward_mask, k));
    std::vector<T> mt(b.model_target.begin() + std::size_t(k) * B * d,
                      b.model_target.begin() + std::size_t(k + 1) * B * d);
    Id lm = tape.weighted_mse(s_next, tape.constant(B, d, mt),
                              mask_block(b.model_mask, k));
    out.reward_k.push_back(lr);
    out.model_k.push_back(lm);
    reward_sum = tape.add(reward_sum, lr);
    model_sum = tape.add(model_sum, lm);

    s = s_next;
  }

  out.value = value_sum;
  out.policy = policy_sum;
  out.reward = reward_sum;
  out.model = model_sum;
  out.total = tape.add(tape.add(value_sum, policy_sum),
                       tape.add(reward_sum,
                                tape.affine(model_sum, lambda_model, T(0))));
  return out;
}

}  // namespace hnav
