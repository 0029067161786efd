#pragma once

// Length-penalized reward, the policy-gradient update over a softmax policy
// on compression-ratio bins, and a deterministic desk-scale training
// simulator. Everything here is reproducible bit-for-bit under a fixed seed.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "hawkeye/core.hpp"

namespace hawkeye::rewardlab {

struct RewardParams {
  double lambda = 1e-4;  // penalty weight
  double alpha = 0.3;    // target compression ratio
  double eta = 0.05;     // learning rate
};

/// Softmax policy over K compression-ratio bins.
struct PolicyState {
  std::vector<double> theta;
  std::vector<double> bins;

  static PolicyState make_default(int k = 20) {
    if (k < 2) throw std::invalid_argument("policy needs at least 2 bins");
    PolicyState s;
    s.theta.assign(k, 0.0);
    s.bins.resize(k);
    for (int i = 0; i < k; ++i) s.bins[i] = static_cast<double>(i + 1) / k;
    return s;
  }

  std::vector<double> probabilities() const {
    std::vector<double> p(theta.size());
    double m = theta[0];
    for (double t : theta) m = std::max(m, t);
    double sum = 0.0;
    for (size_t j = 0; j < theta.size(); ++j) {
      p[j] = std::exp(theta[j] - m);
      sum += p[j];
    }
    for (auto& v : p) v /= sum;
    return p;
  }
};

enum class EmCurve { ResponderCoupled, AlwaysOne };

/// Simulator environment. The EM probability curve rises with the retained
/// ratio: a responder fed a fuller outline answers correctly more often.
struct SimEnv {
  std::int64_t len_orig = 200;
  EmCurve em_curve = EmCurve::ResponderCoupled;
  double p_max = 0.9;
  double r0 = 0.2;
  double k = 25.0;
  std::uint32_t rng_seed = 0;
};

inline double em_probability(const SimEnv& env, double ratio) {
  return env.p_max / (1.0 + std::exp(-env.k * (ratio - env.r0)));
}

/// lambda * max(0, len_c - alpha * len_orig)^2
inline double length_penalty(std::int64_t len_c, std::int64_t len_orig,
                             const RewardParams& params) {
  const double over = static_cast<double>(len_c) - params.alpha * static_cast<double>(len_orig);
  return over > 0.0 ? params.lambda * over * over : 0.0;
}

/// em - length_penalty(len_c, len_orig)
inline double reward(int em, std::int64_t len_c, std::int64_t len_orig,
                     const RewardParams& params) {
  return static_cast<double>(em) - length_penalty(len_c, len_orig, params);
}

enum class StepMode { Reinforce, GroupRelative };

class DegenerateGroup : public Error {
public:
  using Error::Error;
};

struct Sample {
  int bin_index = 0;
  double reward = 0.0;
};

/// One policy-gradient step. Reinforce weights each sample by its raw reward
/// and sums the per-sample gradients; GroupRelative weights by the
/// group-normalized advantage and averages. The log-softmax gradient is
/// analytic: d log pi(a) / d theta_j = [j == a] - pi_j.
inline PolicyState policy_step(const PolicyState& state, const std::vector<Sample>& samples,
                               const RewardParams& params, StepMode mode = StepMode::Reinforce) {
  if (samples.empty()) throw std::invalid_argument("policy_step needs at least one sample");
  const size_t k = state.theta.size();
  const auto pi = state.probabilities();

  std::vector<double> weights(samples.size());
  if (mode == StepMode::Reinforce) {
    for (size_t i = 0; i < samples.size(); ++i) weights[i] = samples[i].reward;
  } else {
    if (samples.size() < 2)
      throw DegenerateGroup("group_relative mode needs a group of at least 2");
    double mean = 0.0;
    for (const auto& s : samples) mean += s.reward;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& s : samples) var += (s.reward - mean) * (s.reward - mean);
    const double stddev = std::sqrt(var / static_cast<double>(samples.size()));
    for (size_t i = 0; i < samples.size(); ++i)
      weights[i] = (samples[i].reward - mean) / (stddev + 1e-8);
  }

  std::vector<double> grad(k, 0.0);
  for (size_t i = 0; i < samples.size(); ++i) {
    const int a = samples[i].bin_index;
    for (size_t j = 0; j < k; ++j)
      grad[j] += weights[i] * ((static_cast<int>(j) == a ? 1.0 : 0.0) - pi[j]);
  }
  if (mode == StepMode::GroupRelative) {
    for (auto& g : grad) g /= static_cast<double>(samples.size());
  }

  PolicyState next = state;
  for (size_t j = 0; j < k; ++j) next.theta[j] += params.eta * grad[j];
  return next;
}

// ---------------------------------------------------------------------------
// Deterministic simulator
// ---------------------------------------------------------------------------

namespace detail {

/// 53-bit uniform in [0, 1) from two consecutive mt19937 draws. Pinned here
/// rather than using std::uniform_real_distribution so trajectories are
/// identical across standard libraries.
class UniformSource {
public:
  explicit UniformSource(std::uint32_t seed) : gen_(seed) {}

  double next() {
    const std::uint64_t hi = gen_();
    const std::uint64_t lo = gen_();
    const std::uint64_t x = ((hi << 32) | lo) >> 11;
    return static_cast<double>(x) * (1.0 / 9007199254740992.0);  // 2^-53
  }

private:
  std::mt19937 gen_;
};

inline int sample_bin(const std::vector<double>& pi, double u) {
  double c = 0.0;
  for (size_t j = 0; j < pi.size(); ++j) {
    c += pi[j];
    if (u < c) return static_cast<int>(j);
  }
  return static_cast<int>(pi.size()) - 1;
}

}  // namespace detail

struct SimStep {
  int step = 0;
  double mean_selected_ratio = 0.0;
  double mean_reward = 0.0;
  std::vector<double> probabilities;  // distribution the step sampled from
};

/// Runs the training loop: sample a group of ratio bins from the policy,
/// score each with the environment, apply one reinforce step, repeat.
/// Deterministic for a fixed env.rng_seed.
inline std::vector<SimStep> simulate_training(const SimEnv& env, const RewardParams& params,
                                              int steps, int group_size,
                                              PolicyState state = PolicyState::make_default()) {
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (group_size < 1) throw std::invalid_argument("group_size must be >= 1");

  detail::UniformSource rng(env.rng_seed);
  std::vector<SimStep> trajectory;
  trajectory.reserve(steps);

  for (int step = 0; step < steps; ++step) {
    const auto pi = state.probabilities();
    std::vector<Sample> samples;
    samples.reserve(group_size);
    double ratio_sum = 0.0;
    double reward_sum = 0.0;
    for (int i = 0; i < group_size; ++i) {
      const int a = detail::sample_bin(pi, rng.next());
      int em = 1;
      if (env.em_curve == EmCurve::ResponderCoupled) {
        em = rng.next() < em_probability(env, state.bins[a]) ? 1 : 0;
      }
      const auto len_c =
          static_cast<std::int64_t>(std::lround(state.bins[a] * static_cast<double>(env.len_orig)));
      const double r = reward(em, len_c, env.len_orig, params);
      samples.push_back({a, r});
      ratio_sum += state.bins[a];
      reward_sum += r;
    }
    state = policy_step(state, samples, params, StepMode::Reinforce);

    SimStep row;
    row.step = step;
    row.mean_selected_ratio = ratio_sum / static_cast<double>(group_size);
    row.mean_reward = reward_sum / static_cast<double>(group_size);
    row.probabilities = pi;
    trajectory.push_back(std::move(row));
  }
  return trajectory;
}

/// Best expected per-sample reward any single bin can achieve in this
/// environment; the yardstick for convergence checks.
inline double max_attainable_mean_reward(const SimEnv& env, const RewardParams& params,
                                         const std::vector<double>& bins) {
  double best = -1e300;
  for (double b : bins) {
    const auto len_c =
        static_cast<std::int64_t>(std::lround(b * static_cast<double>(env.len_orig)));
    const double em = env.em_curve == EmCurve::AlwaysOne ? 1.0 : em_probability(env, b);
    best = std::max(best, em - length_penalty(len_c, env.len_orig, params));
  }
  return best;
}

/// CSV: step, mean_selected_ratio, mean_reward, then one probability column
/// per bin. Ratio and reward keep full round-trip precision.
inline void write_trajectory_csv(std::ostream& os, const std::vector<SimStep>& trajectory,
                                 const std::vector<double>& bins) {
  os << "step,mean_selected_ratio,mean_reward";
  char buf[64];
  for (double b : bins) {
    std::snprintf(buf, sizeof buf, ",p_%.2f", b);
    os << buf;
  }
  os << "\n";
  for (const auto& row : trajectory) {
    std::snprintf(buf, sizeof buf, "%d", row.step);
    os << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", row.mean_selected_ratio);
    os << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", row.mean_reward);
    os << buf;
    for (double p : row.probabilities) {
      std::snprintf(buf, sizeof buf, ",%.9g", p);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace hawkeye::rewardlab
