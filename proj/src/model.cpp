#include "hnav/model.hpp"

#include <cmath>
#include <vector>

#include "hnav/errors.hpp"
#include "hnav/kernels.hpp"

namespace hnav {

namespace {

void elu_inplace(std::span<float> v) {
  for (auto& x : v) x = x > 0.0f ? x : std::expm1(x);
}

void unit_maxabs_inplace(std::span<float> v) {
  float m = 0.0f;
  for (float x : v) m = std::max(m, std::abs(x));
  if (m > 1.0f)
    for (auto& x : v) x /= m;
}

// y[n] = x[k] * W[k x n] + b[n], single row.
void affine_row(std::span<const float> x, std::span<const float> w,
                std::span<const float> b, std::span<float> y) {
  kernels::gemm(x.data(), w.data(), y.data(), 1, int(x.size()), int(y.size()),
                false);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] += b[j];
}

void check_finite(std::span<const float> v, const char* what) {
  for (float x : v)
    if (!std::isfinite(x)) throw NonFiniteValue(std::string(what));
}

}  // namespace

int phi_size_by_layer_map(int d, int h_f) {
  int total = 0;
  total += (d + kNumActions) * h_f;  // W1
  total += h_f;                      // b1
  total += h_f * (d + 1);            // W2
  total += d + 1;                    // b2
  return total;
}

std::array<float, kEncoderInput> normalize_obs(const JointState& o,
                                               int map_size,
                                               double v_max_step) {
  const double extent = map_size * 100.0;
  std::array<float, kEncoderInput> out;
  out[0] = float(o.x / extent);
  out[1] = float(o.y / extent);
  out[2] = float(o.z / extent);
  out[3] = float(std::sin(o.yaw));
  out[4] = float(std::cos(o.yaw));
  out[5] = float(std::sin(o.pitch));
  out[6] = float(std::cos(o.pitch));
  out[7] = float(std::sin(o.roll));
  out[8] = float(std::cos(o.roll));
  out[9] = float(o.vx / v_max_step);
  out[10] = float(o.vy / v_max_step);
  out[11] = float(o.vz / v_max_step);
  out[12] = float(o.wyaw / v_max_step);
  out[13] = float(o.wpitch / v_max_step);
  out[14] = float(o.wroll / v_max_step);
  for (float v : out)
    if (!std::isfinite(v)) throw NonFiniteValue("non-finite observation");
  return out;
}

Hypermodel::Hypermodel(const ModelConfig& cfg) : cfg_(cfg) {
  register_hypermodel(params_, cfg_);
}

void Hypermodel::init(Rng& rng) {
  const int in = kEncoderInput;
  const int ctx_in = context_input_size(cfg_.nc);
  auto fill = [&rng](std::span<float> v, int fan_in) {
    double bound = 1.0 / std::sqrt(double(fan_in));
    for (auto& x : v) x = float(rng.uniform(-bound, bound));
  };
  fill(params_.view("enc.w1"), in);
  fill(params_.view("enc.b1"), in);
  fill(params_.view("enc.w2"), cfg_.enc_hidden);
  fill(params_.view("enc.b2"), cfg_.enc_hidden);
  fill(params_.view("trunk.w1"), ctx_in);
  fill(params_.view("trunk.b1"), ctx_in);
  fill(params_.view("trunk.w2"), cfg_.trunk_hidden);
  fill(params_.view("trunk.b2"), cfg_.trunk_hidden);
  fill(params_.view("pred.w1"), cfg_.d + cfg_.embed);
  fill(params_.view("pred.b1"), cfg_.d + cfg_.embed);
  fill(params_.view("pred.w2"), cfg_.pred_hidden);
  fill(params_.view("pred.b2"), cfg_.pred_hidden);

  // hyper.w stays zero; hyper.b holds the shared default transition net so
  // every context yields the same phi until the head moves.
  auto b = params_.view("hyper.b");
  const int d = cfg_.d, h = cfg_.h_f;
  std::size_t at = 0;
  fill(b.subspan(at, std::size_t((d + kNumActions)) * h), d + kNumActions);
  at += std::size_t(d + kNumActions) * h;
  fill(b.subspan(at, std::size_t(h)), d + kNumActions);
  at += std::size_t(h);
  fill(b.subspan(at, std::size_t(h) * (d + 1)), h);
  at += std::size_t(h) * (d + 1);
  fill(b.subspan(at, std::size_t(d + 1)), h);
}

void Hypermodel::encode(std::span<const float> obs_norm,
                        std::span<float> s_out) const {
  if (int(obs_norm.size()) != kEncoderInput || int(s_out.size()) != cfg_.d)
    throw ShapeMismatch("encode: bad spans");
  std::vector<float> h(std::size_t(cfg_.enc_hidden));
  affine_row(obs_norm, params_.view("enc.w1"), params_.view("enc.b1"), h);
  elu_inplace(h);
  affine_row(h, params_.view("enc.w2"), params_.view("enc.b2"), s_out);
  unit_maxabs_inplace(s_out);
  check_finite(s_out, "encode produced non-finite latent");
}

void Hypermodel::context_embed(const TaskContext& ctx,
                               std::span<float> e_out) const {
  context_embed(std::span<const float>(ctx.data.data(), ctx.data.size()),
                e_out);
}

void Hypermodel::context_embed(std::span<const float> ctx_flat,
                               std::span<float> e_out) const {
  if (int(ctx_flat.size()) != context_input_size(cfg_.nc) ||
      int(e_out.size()) != cfg_.embed)
    throw ShapeMismatch("context_embed: bad spans");
  std::vector<float> h(std::size_t(cfg_.trunk_hidden));
  affine_row(ctx_flat, params_.view("trunk.w1"), params_.view("trunk.b1"), h);
  elu_inplace(h);
  affine_row(h, params_.view("trunk.w2"), params_.view("trunk.b2"), e_out);
  elu_inplace(e_out);
  check_finite(e_out, "context_embed produced non-finite embedding");
}

void Hypermodel::hyper(std::span<const float> e_embed,
                       std::span<float> phi_out) const {
  if (int(e_embed.size()) != cfg_.embed || int(phi_out.size()) != num_phi())
    throw ShapeMismatch("hyper: bad spans");
  affine_row(e_embed, params_.view("hyper.w"), params_.view("hyper.b"),
             phi_out);
  check_finite(phi_out, "hyper produced non-finite weights");
}

void Hypermodel::transition(std::span<const float> phi,
                            std::span<const float> s, int action,
                            std::span<float> s_next_out,
                            float& reward_out) const {
  const int d = cfg_.d, h = cfg_.h_f;
  if (int(phi.size()) != num_phi() || int(s.size()) != d ||
      int(s_next_out.size()) != d || action < 0 || action >= kNumActions)
    throw ShapeMismatch("transition: bad spans");
  std::vector<float> x(std::size_t(d + kNumActions), 0.0f);
  for (int i = 0; i < d; ++i) x[std::size_t(i)] = s[std::size_t(i)];
  x[std::size_t(d + action)] = 1.0f;

  std::size_t at = 0;
  auto w1 = phi.subspan(at, std::size_t(d + kNumActions) * h);
  at += w1.size();
  auto b1 = phi.subspan(at, std::size_t(h));
  at += b1.size();
  auto w2 = phi.subspan(at, std::size_t(h) * (d + 1));
  at += w2.size();
  auto b2 = phi.subspan(at, std::size_t(d + 1));

  std::vector<float> hid(std::size_t(h), 0.0f);
  affine_row(x, w1, b1, hid);
  elu_inplace(hid);
  std::vector<float> out(std::size_t(d + 1));
  affine_row(hid, w2, b2, out);
  for (int i = 0; i < d; ++i) s_next_out[std::size_t(i)] = out[std::size_t(i)];
  unit_maxabs_inplace(s_next_out);
  reward_out = out[std::size_t(d)];
  check_finite(s_next_out, "transition produced non-finite latent");
  if (!std::isfinite(reward_out))
    throw NonFiniteValue("transition produced non-finite reward");
}

void Hypermodel::predict(std::span<const float> s,
                         std::span<const float> e_embed,
                         std::span<float> logits_out,
                         float& value_out) const {
  if (int(s.size()) != cfg_.d || int(e_embed.size()) != cfg_.embed ||
      int(logits_out.size()) != kNumActions)
    throw ShapeMismatch("predict: bad spans");
  std::vector<float> in(std::size_t(cfg_.d + cfg_.embed));
  for (int i = 0; i < cfg_.d; ++i) in[std::size_t(i)] = s[std::size_t(i)];
  for (int i = 0; i < cfg_.embed; ++i)
    in[std::size_t(cfg_.d + i)] = e_embed[std::size_t(i)];
  std::vector<float> h(std::size_t(cfg_.pred_hidden));
  affine_row(in, params_.view("pred.w1"), params_.view("pred.b1"), h);
  elu_inplace(h);
  std::vector<float> out(std::size_t(kNumActions + 1));
  affine_row(h, params_.view("pred.w2"), params_.view("pred.b2"), out);
  for (int i = 0; i < kNumActions; ++i)
    logits_out[std::size_t(i)] = out[std::size_t(i)];
  float raw = out[std::size_t(kNumActions)];
  float sig = raw >= 0.0f ? 1.0f / (1.0f + std::exp(-raw))
                          : std::exp(raw) / (1.0f + std::exp(raw));
  value_out = float(-cfg_.v_max_value) * sig;
  check_finite(logits_out, "predict produced non-finite logits");
  if (!std::isfinite(value_out))
    throw NonFiniteValue("predict produced non-finite value");
}

std::string Hypermodel::phi_layout() const {
  const int d = cfg_.d, h = cfg_.h_f;
  std::string s;
  s += "phi.W1[" + std::to_string(d + kNumActions) + "x" + std::to_string(h) +
       "] ";
  s += "phi.b1[" + std::to_string(h) + "] ";
  s += "phi.W2[" + std::to_string(h) + "x" + std::to_string(d + 1) + "] ";
  s += "phi.b2[" + std::to_string(d + 1) + "]";
  return s;
}

void softmax(std::span<const float> logits, std::span<float> probs_out) {
  float mx = logits[0];
  for (float v : logits) mx = std::max(mx, v);
  float z = 0.0f;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs_out[i] = std::exp(logits[i] - mx);
    z += probs_out[i];
  }
  for (auto& p : probs_out) p /= z;
}

}  // namespace hnav
