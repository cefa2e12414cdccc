#include "hnav/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hnav/errors.hpp"

namespace hnav {

namespace {

void mix_bytes(std::uint64_t& h, const void* p, std::size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
}

void mix_obs(std::uint64_t& h, const JointState& o) {
  auto a = o.to_array();
  mix_bytes(h, a.data(), sizeof(double) * a.size());
}

}  // namespace

std::uint64_t trajectory_checksum(const Trajectory& traj) {
  std::uint64_t h = 1469598103934665603ull;
  mix_bytes(h, &traj.task.id, sizeof(traj.task.id));
  mix_bytes(h, &traj.task.start, sizeof(traj.task.start));
  mix_bytes(h, &traj.task.goal, sizeof(traj.task.goal));
  mix_bytes(h, traj.task.map.cells.data(), traj.task.map.cells.size());
  mix_bytes(h, traj.context.data.data(),
            traj.context.data.size() * sizeof(float));
  for (const auto& s : traj.steps) {
    mix_obs(h, s.obs);
    mix_bytes(h, &s.action, sizeof(s.action));
    mix_bytes(h, &s.reward, sizeof(s.reward));
    char d = s.done ? 1 : 0;
    mix_bytes(h, &d, 1);
    mix_bytes(h, s.policy.data(), sizeof(float) * s.policy.size());
    mix_bytes(h, &s.value, sizeof(s.value));
  }
  mix_obs(h, traj.final_obs);
  char ok = traj.success ? 1 : 0;
  mix_bytes(h, &ok, 1);
  return h;
}

void ReplayBuffer::append(Trajectory traj) {
  if (traj.steps.empty())
    throw std::invalid_argument("empty trajectory rejected");
  traj.checksum = trajectory_checksum(traj);
  auto item = std::make_shared<const Trajectory>(std::move(traj));
  std::lock_guard lock(mu_);
  items_.push_back(std::move(item));
  if (items_.size() > capacity_) items_.pop_front();
  total_ += 1;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::uint64_t ReplayBuffer::total_appended() const {
  std::lock_guard lock(mu_);
  return total_;
}

std::vector<std::shared_ptr<const Trajectory>> ReplayBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  return {items_.begin(), items_.end()};
}

std::shared_ptr<const Trajectory> ReplayBuffer::at(std::size_t i) const {
  std::lock_guard lock(mu_);
  return items_.at(i);
}

Cell cell_of(const JointState& obs, double cell_size) {
  return {int(std::floor(obs.y / cell_size)),
          int(std::floor(obs.x / cell_size))};
}

RelabelResult relabel(const Trajectory& traj, int t, Rng& rng) {
  const int T = traj.length();
  if (t >= T) throw NoFutureStep();
  // Future observation index in (t, T]; the final observation counts, so a
  // successful episode can be relabeled onto its true goal (a no-op).
  int tp = t + 1 + int(rng.uniform_int(0, std::uint64_t(T - t - 1)));
  RelabelResult out;
  out.goal = cell_of(traj.obs_at(tp));
  Task relabeled = traj.task;
  relabeled.goal = out.goal;
  out.context = encode_context(relabeled, traj.context.nc);
  // First transition at or after t that arrives in the new goal cell. The
  // drawn index guarantees one exists.
  out.done_position = tp;
  for (int p = t + 1; p <= T; ++p) {
    if (cell_of(traj.obs_at(p)) == out.goal) {
      out.done_position = p;
      break;
    }
  }
  return out;
}

double nstep_return(std::span<const double> rewards,
                    std::span<const double> masks, double gamma,
                    double v_bootstrap) {
  if (masks.size() != rewards.size() + 1)
    throw ShapeMismatch("nstep_return: masks must have n+1 entries");
  double acc = 0;
  double g = 1;
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    acc += g * masks[j] * rewards[j];
    g *= gamma;
  }
  acc += g * masks[rewards.size()] * v_bootstrap;
  return acc;
}

std::vector<TrainingTarget> sample_batch(const ReplayBuffer& buffer,
                                         const SampleConfig& cfg,
                                         const Hypermodel& model, Rng& rng) {
  auto snap = buffer.snapshot();
  if (snap.empty()) throw EmptyBuffer();
  std::vector<std::size_t> cumulative;
  std::size_t total = 0;
  for (auto& tr : snap) {
    total += std::size_t(tr->length());
    cumulative.push_back(total);
  }

  const auto& mc = model.config();
  const int K = cfg.unroll, n = cfg.nstep;
  const std::array<float, 6> uniform{1.0f / 6, 1.0f / 6, 1.0f / 6,
                                     1.0f / 6, 1.0f / 6, 1.0f / 6};
  std::vector<float> embed(std::size_t(mc.embed));
  std::vector<float> latent(std::size_t(mc.d));
  std::vector<float> logits(6);

  std::vector<TrainingTarget> out;
  out.reserve(std::size_t(cfg.batch));
  for (int b = 0; b < cfg.batch; ++b) {
    std::size_t pick = rng.uniform_int(0, std::uint64_t(total) - 1);
    std::size_t ti = 0;
    while (cumulative[ti] <= pick) ++ti;
    const Trajectory& traj = *snap[ti];
    int t = int(pick - (ti == 0 ? 0 : cumulative[ti - 1]));
    const int T = traj.length();

    TrainingTarget tgt;
    tgt.traj_index = int(ti);
    tgt.t = t;
    tgt.unroll = K;
    tgt.relabeled = cfg.p_her > 0 && rng.bernoulli(cfg.p_her);
    if (tgt.relabeled) {
      auto rl = relabel(traj, t, rng);
      tgt.goal = rl.goal;
      tgt.done_position = rl.done_position;
      tgt.success = true;  // the relabeled goal is entered by construction
      tgt.ctx_flat = rl.context.data;
    } else {
      tgt.goal = traj.task.goal;
      tgt.done_position = T;
      tgt.success = traj.success;
      tgt.ctx_flat = traj.context.data;
    }
    const int d = tgt.done_position;

    model.context_embed(tgt.ctx_flat, embed);

    // Rewritten reward on arrival at position p, valid for p <= d.
    auto reward_at = [&](int p) -> double {
      if (tgt.relabeled) return p == d ? 0.0 : -1.0;
      return double(traj.steps[std::size_t(p - 1)].reward);
    };
    auto predict_at = [&](int p, float& value) {
      auto norm = normalize_obs(traj.obs_at(p), mc.map_size, mc.v_max_step);
      model.encode(norm, latent);
      model.predict(latent, embed, logits, value);
    };

    for (int k = 0; k <= K; ++k) {
      int p = t + k;
      tgt.obs.push_back(traj.obs_at(std::min(p, T)));
      bool pos_on = p < d || (p == d && tgt.success);
      tgt.position_mask.push_back(pos_on ? 1.0 : 0.0);

      // Value target: masked n-step return with current-net bootstrap.
      double z = 0.0;
      if (pos_on) {
        std::vector<double> rewards(std::size_t(n), 0.0);
        std::vector<double> masks(std::size_t(n) + 1);
        for (int j = 1; j <= n; ++j) {
          bool on = p + j <= d;
          masks[std::size_t(j - 1)] = on ? 1.0 : 0.0;
          rewards[std::size_t(j - 1)] = on ? reward_at(p + j) : 0.0;
        }
        double v_boot = 0.0;
        if (p + n + 1 <= d) {
          masks[std::size_t(n)] = 1.0;
          float v = 0;
          predict_at(p + n, v);
          v_boot = double(v);
        }
        z = nstep_return(rewards, masks, cfg.gamma, v_boot);
        z = std::clamp(z, -mc.v_max_value, 0.0);
      }
      tgt.value_target.push_back(z);

      // Policy target: stored search statistics for the original goal,
      // current-net policy under the relabeled context, uniform when the
      // position is masked or terminal.
      std::array<float, 6> pol = uniform;
      if (pos_on && p < std::min(d, T)) {
        if (tgt.relabeled) {
          float v = 0;
          predict_at(p, v);
          softmax(logits, pol);
        } else {
          pol = traj.steps[std::size_t(p)].policy;
        }
      }
      tgt.policy_target.push_back(pol);

      if (k == K) break;
      tgt.actions.push_back(p < T ? traj.steps[std::size_t(p)].action : 0);
      bool r_on = p + 1 <= d;
      tgt.reward_mask.push_back(r_on ? 1.0 : 0.0);
      tgt.reward_target.push_back(r_on ? reward_at(p + 1) : 0.0);
    }
    out.push_back(std::move(tgt));
  }
  return out;
}

}  // namespace hnav
