/* Copyright 2026 The dialearn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dialearn/error.hpp"

namespace dialearn {

struct KtdConfig {
  double prior_var = 10.0;
  double process_noise = 1e-3;
  double observation_noise = 1.0;
  double discount = 0.95;
  double ut_kappa = 0.0;  // unscented transform spread; 0 gives the symmetric set
};

// Tabular Q-function under a Gaussian posterior. Features are one-hot over
// (state, action), so a parameter only enters the covariance once an update
// touches it; untouched parameters stay independent with variance
// prior_var + process_noise * steps, tracked lazily.
class QParams {
 public:
  QParams(std::size_t n_states, std::size_t n_actions, KtdConfig cfg = {})
      : n_states_(n_states), n_actions_(n_actions), cfg_(cfg),
        mean_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_states * n_actions))) {
    if (n_states == 0 || n_actions == 0) fail("QParams needs at least one state and one action");
    if (!(cfg.discount > 0.0 && cfg.discount < 1.0)) fail("discount must lie in (0,1), got ", cfg.discount);
    if (cfg.prior_var < 0.0 || cfg.process_noise < 0.0 || cfg.observation_noise < 0.0)
      fail("Kalman variances must be non-negative");
  }

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t dim() const { return n_states_ * n_actions_; }
  const KtdConfig& config() const { return cfg_; }
  std::size_t steps() const { return steps_; }

  std::size_t index(std::size_t s, std::size_t a) const {
    if (s >= n_states_ || a >= n_actions_) fail("(state ", s, ", action ", a, ") out of range");
    return s * n_actions_ + a;
  }

  double q(std::size_t s, std::size_t a) const { return mean_[static_cast<Eigen::Index>(index(s, a))]; }
  void set_mean(std::size_t s, std::size_t a, double v) { mean_[static_cast<Eigen::Index>(index(s, a))] = v; }
  const Eigen::VectorXd& mean() const { return mean_; }

  double idle_variance() const { return cfg_.prior_var + cfg_.process_noise * static_cast<double>(steps_); }

  double covariance(std::size_t i, std::size_t j) const {
    auto pi = pos_.find(i), pj = pos_.find(j);
    if (pi != pos_.end() && pj != pos_.end()) return cov_(pi->second, pj->second);
    return i == j ? idle_variance() : 0.0;
  }

  std::size_t n_active() const { return active_.size(); }
  const std::vector<std::size_t>& active() const { return active_; }
  const Eigen::MatrixXd& active_covariance() const { return cov_; }

  // Smallest eigenvalue check on the coupled block; idle variances are
  // non-negative by construction.
  bool is_psd(double tol = 1e-8) const {
    if (cov_.rows() == 0) return idle_variance() >= -tol;
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > tol) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol;
  }

  // Kalman prediction: parameters drift by process noise.
  void predict() {
    cov_.diagonal().array() += cfg_.process_noise;
    ++steps_;
  }

  // One KTD-Q correction. The observation is
  //   reward = Q(s,a) - discount * max_{a' in next_actions} Q(s',a') + noise,
  // with the max dropped on terminal transitions. Sigma points live in the
  // subspace of parameters the observation reads; the cross-covariance with
  // the rest follows from the Gaussian regression P_thetaR P_RR^+ P_Rr.
  void correct(std::size_t s, std::size_t a, double reward, std::size_t next_s,
               const std::vector<std::size_t>& next_actions, bool terminal) {
    std::vector<std::size_t> read{index(s, a)};
    std::vector<int> next_slots;  // positions in `read` of Q(s', .)
    if (!terminal) {
      if (next_actions.empty()) fail("non-terminal transition needs at least one next action");
      for (std::size_t na : next_actions) {
        const std::size_t idx = index(next_s, na);
        auto it = std::find(read.begin(), read.end(), idx);
        if (it == read.end()) {
          read.push_back(idx);
          it = read.end() - 1;
        }
        next_slots.push_back(static_cast<int>(it - read.begin()));
      }
    }
    for (auto idx : read) activate(idx);

    const auto n = static_cast<Eigen::Index>(read.size());
    std::vector<Eigen::Index> pos(read.size());
    for (std::size_t i = 0; i < read.size(); ++i) pos[i] = static_cast<Eigen::Index>(pos_.at(read[i]));

    Eigen::VectorXd m(n);
    Eigen::MatrixXd prr(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      m[i] = mean_[static_cast<Eigen::Index>(read[static_cast<std::size_t>(i)])];
      for (Eigen::Index j = 0; j < n; ++j) prr(i, j) = cov_(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prr);
    const Eigen::VectorXd evals = es.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd sqrt_p = es.eigenvectors() * evals.cwiseSqrt().asDiagonal();

    const double gamma = cfg_.discount;
    auto observe = [&](const Eigen::VectorXd& x) {
      if (terminal) return x[0];
      double best = x[next_slots[0]];
      for (int k : next_slots) best = std::max(best, x[k]);
      return x[0] - gamma * best;
    };

    const double lambda = static_cast<double>(n) + cfg_.ut_kappa;
    const double w0 = cfg_.ut_kappa / lambda;
    const double wi = 1.0 / (2.0 * lambda);
    const double spread = std::sqrt(lambda);

    std::vector<Eigen::VectorXd> points{m};
    std::vector<double> weights{w0};
    for (Eigen::Index j = 0; j < n; ++j) {
      points.push_back(m + spread * sqrt_p.col(j));
      points.push_back(m - spread * sqrt_p.col(j));
      weights.push_back(wi);
      weights.push_back(wi);
    }
    std::vector<double> images(points.size());
    double r_hat = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      images[i] = observe(points[i]);
      r_hat += weights[i] * images[i];
    }
    double p_rr = cfg_.observation_noise;
    Eigen::VectorXd p_xr = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = images[i] - r_hat;
      p_rr += weights[i] * d * d;
      p_xr += weights[i] * d * (points[i] - m);
    }
    if (!(p_rr > 0.0)) return;

    // z = P_RR^+ P_Rr, small eigenvalues treated as zero.
    const double cutoff = 1e-12 * std::max(1.0, evals.maxCoeff());
    Eigen::VectorXd inv = evals;
    for (Eigen::Index i = 0; i < n; ++i) inv[i] = evals[i] > cutoff ? 1.0 / evals[i] : 0.0;
    const Eigen::VectorXd z = es.eigenvectors() * (inv.asDiagonal() * (es.eigenvectors().transpose() * p_xr));

    Eigen::VectorXd p_theta_r = Eigen::VectorXd::Zero(cov_.rows());
    for (Eigen::Index j = 0; j < n; ++j) p_theta_r += cov_.col(pos[static_cast<std::size_t>(j)]) * z[j];
    const Eigen::VectorXd gain = p_theta_r / p_rr;

    const double innovation = reward - r_hat;
    for (std::size_t i = 0; i < active_.size(); ++i)
      mean_[static_cast<Eigen::Index>(active_[i])] += gain[static_cast<Eigen::Index>(i)] * innovation;
    cov_.noalias() -= p_rr * gain * gain.transpose();
    cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
    if (cov_.diagonal().minCoeff() < -1e-8)
      fail("KTD-Q covariance lost positive semi-definiteness (min variance ",
           cov_.diagonal().minCoeff(), ")");
  }

  bool operator==(const QParams& o) const {
    return n_states_ == o.n_states_ && n_actions_ == o.n_actions_ && steps_ == o.steps_ &&
           active_ == o.active_ && mean_ == o.mean_ && cov_ == o.cov_ &&
           cfg_.prior_var == o.cfg_.prior_var && cfg_.process_noise == o.cfg_.process_noise &&
           cfg_.observation_noise == o.cfg_.observation_noise && cfg_.discount == o.cfg_.discount &&
           cfg_.ut_kappa == o.cfg_.ut_kappa;
  }

  friend nlohmann::json to_json(const QParams& p);
  friend QParams qparams_from_json(const nlohmann::json& j);

 private:
  void activate(std::size_t idx) {
    if (pos_.count(idx)) return;
    const auto m = static_cast<Eigen::Index>(active_.size());
    Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(m + 1, m + 1);
    grown.topLeftCorner(m, m) = cov_;
    grown(m, m) = idle_variance();
    cov_.swap(grown);
    pos_[idx] = active_.size();
    active_.push_back(idx);
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  KtdConfig cfg_;
  Eigen::VectorXd mean_;
  std::vector<std::size_t> active_;
  std::unordered_map<std::size_t, std::size_t> pos_;
  Eigen::MatrixXd cov_;
  std::size_t steps_ = 0;
};

inline nlohmann::json to_json(const QParams& p) {
  std::vector<double> packed;
  const auto m = p.cov_.rows();
  packed.reserve(static_cast<std::size_t>(m * (m + 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) packed.push_back(p.cov_(i, j));
  std::vector<double> mean(p.mean_.data(), p.mean_.data() + p.mean_.size());
  return {{"n_states", p.n_states_},
          {"n_actions", p.n_actions_},
          {"prior_var", p.cfg_.prior_var},
          {"process_noise", p.cfg_.process_noise},
          {"observation_noise", p.cfg_.observation_noise},
          {"discount", p.cfg_.discount},
          {"ut_kappa", p.cfg_.ut_kappa},
          {"steps", p.steps_},
          {"mean", mean},
          {"active", p.active_},
          {"covariance_lower", packed}};
}

inline QParams qparams_from_json(const nlohmann::json& j) {
  KtdConfig cfg;
  cfg.prior_var = j.at("prior_var").get<double>();
  cfg.process_noise = j.at("process_noise").get<double>();
  cfg.observation_noise = j.at("observation_noise").get<double>();
  cfg.discount = j.at("discount").get<double>();
  cfg.ut_kappa = j.at("ut_kappa").get<double>();
  QParams p(j.at("n_states").get<std::size_t>(), j.at("n_actions").get<std::size_t>(), cfg);
  p.steps_ = j.at("steps").get<std::size_t>();
  auto mean = j.at("mean").get<std::vector<double>>();
  if (mean.size() != p.dim()) fail(Error::Kind::format, "Q mean has ", mean.size(), " entries, expected ", p.dim());
  for (std::size_t i = 0; i < mean.size(); ++i) p.mean_[static_cast<Eigen::Index>(i)] = mean[i];
  p.active_ = j.at("active").get<std::vector<std::size_t>>();
  const auto m = static_cast<Eigen::Index>(p.active_.size());
  auto packed = j.at("covariance_lower").get<std::vector<double>>();
  if (packed.size() != static_cast<std::size_t>(m * (m + 1) / 2))
    fail(Error::Kind::format, "packed covariance has ", packed.size(), " entries for ", m, " active parameters");
  p.cov_ = Eigen::MatrixXd::Zero(m, m);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index jj = 0; jj <= i; ++jj) p.cov_(i, jj) = p.cov_(jj, i) = packed[k++];
  for (std::size_t i = 0; i < p.active_.size(); ++i) {
    if (p.active_[i] >= p.dim()) fail(Error::Kind::format, "active parameter ", p.active_[i], " out of range");
    p.pos_[p.active_[i]] = i;
  }
  return p;
}

//------------------------------------------------------------------------------
// Rewards

// s_i = f_i + (theta * a_i - a_{i-1})
inline double shaped_reward(double f, double a, double a_prev, double theta = 0.95) {
  return f + (theta * a - a_prev);
}

// Annotation-act feedback: loss in [0,1] mapped onto [1,-1].
inline double ask_feedback(double l) { return (1.0 - l) * 2.0 - 1.0; }

inline bool is_feedback_level(double a) {
  for (double v : {-1.0, -0.5, 0.0, 0.5, 1.0})
    if (a == v) return true;
  return false;
}

//------------------------------------------------------------------------------
// Learning steps

struct TurnRecord {
  std::size_t state = 0;
  std::size_t action = 0;
  double f = -1.0;  // turn feedback
  double a = 0.0;   // additional feedback
  std::size_t next_state = 0;
  std::vector<std::size_t> next_actions;  // feasible in next_state
  bool terminal = false;
};

inline void ktdq_update_in_place(QParams& p, const TurnRecord& t, double reward) {
  p.predict();
  p.correct(t.state, t.action, reward, t.next_state, t.next_actions, t.terminal);
}

inline QParams ktdq_update(QParams p, const TurnRecord& t, double reward) {
  ktdq_update_in_place(p, t, reward);
  return p;
}

struct RewardConfig {
  double theta = 0.95;
  double success_bonus = 20.0;
};

// Shaped rewards of a dialogue, the last one carrying the success bonus.
inline std::vector<double> episode_rewards(const std::vector<TurnRecord>& turns, bool success,
                                           const RewardConfig& rc = {}) {
  std::vector<double> r;
  double a_prev = 0.0;
  for (const auto& t : turns) {
    r.push_back(shaped_reward(t.f, t.a, a_prev, rc.theta));
    a_prev = t.a;
  }
  if (!r.empty() && success) r.back() += rc.success_bonus;
  return r;
}

inline void episode_update_in_place(QParams& p, const std::vector<TurnRecord>& turns, bool success,
                                    const RewardConfig& rc = {}) {
  if (turns.empty()) return;
  if (!turns.back().terminal) fail("the last turn of an episode must be terminal");
  const auto rewards = episode_rewards(turns, success, rc);
  for (std::size_t i = 0; i < turns.size(); ++i) ktdq_update_in_place(p, turns[i], rewards[i]);
}

inline QParams episode_update(QParams p, const std::vector<TurnRecord>& turns, bool success,
                              const RewardConfig& rc = {}) {
  episode_update_in_place(p, turns, success, rc);
  return p;
}

//------------------------------------------------------------------------------
// Action selection

// epsilon-greedy over the feasible actions; greedy ties go to the lowest index.
template <typename Rng>
std::size_t select_action(const QParams& p, std::size_t s, const std::vector<bool>& mask, double epsilon,
                          Rng& rng) {
  std::vector<std::size_t> ok;
  for (std::size_t a = 0; a < mask.size() && a < p.n_actions(); ++a)
    if (mask[a]) ok.push_back(a);
  if (ok.empty()) fail("no feasible action to select");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < epsilon) return ok[std::uniform_int_distribution<std::size_t>(0, ok.size() - 1)(rng)];
  std::size_t best = ok.front();
  for (std::size_t a : ok)
    if (p.q(s, a) > p.q(s, best)) best = a;
  return best;
}

// Linear decay from `start` to `end` over `span` dialogues.
inline double epsilon_schedule(std::size_t dialogue, double start = 0.3, double end = 0.05,
                               std::size_t span = 100) {
  if (span == 0 || dialogue >= span) return end;
  return start + (end - start) * static_cast<double>(dialogue) / static_cast<double>(span);
}

}  // namespace dialearn
