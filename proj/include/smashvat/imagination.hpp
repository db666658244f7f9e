#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <unordered_map>
#include <vector>

#include "smashvat/grid.hpp"

namespace smashvat {

/// Compact canonical state key for the imaginary MDPs. The gridworld engine
/// packs (intact-vat bitmask, trapped flag); oracle/test MDPs may use any
/// distinct integers.
using StateKey = std::uint64_t;

struct IntrinsicWeights {
    double alpha = 10.0;  // side-effect weight
    double beta = 10.0;   // empathy weight
};

/// Composite reward: (r_env - alpha*nse + beta*emp) / ((alpha+beta)/2).
/// Throws std::invalid_argument when alpha + beta <= 0.
double r_total(double r_env, double nse, double emp, const IntrinsicWeights& w);

/// Keyed uniform draw in [0,1) with 53-bit mantissa precision. Pure function
/// of its arguments; stable across platforms.
double sample_reward(std::uint64_t master_seed, int member, StateKey key);

/// Ensemble of n tabular action-value functions sharing one update rule:
///   Q_i(s,a) <- max[ Q_i(s,a), reward(i,s) + gamma * max_a' Q_i(s',a') ]
/// Unseen entries read as 0, so every entry is non-decreasing and bounded by
/// max_reward / (1 - gamma). The reward function is supplied by the owner and
/// is not serialized; checkpoints store only the table entries.
class QEnsemble {
public:
    using RewardFn = std::function<double(int member, StateKey key)>;

    QEnsemble(int n, double gamma, RewardFn reward, int num_actions = kNumActions);

    void update(StateKey s, int action, StateKey s_next);

    double q(int member, StateKey s, int action) const;
    /// max_a Q_i(s,a); 0 for never-seen states.
    double value(int member, StateKey s) const;

    int size() const { return n_; }
    double gamma() const { return gamma_; }
    int num_actions() const { return num_actions_; }
    double reward(int member, StateKey key) const;

    /// Versioned binary table dump; round-trip is lossless. load() replaces
    /// the current entries and requires matching n / num_actions.
    void save(std::ostream& out) const;
    void load(std::istream& in);

    friend bool operator==(const QEnsemble& a, const QEnsemble& b) {
        return a.n_ == b.n_ && a.gamma_ == b.gamma_ && a.num_actions_ == b.num_actions_ &&
               a.tables_ == b.tables_;
    }

private:
    int n_;
    double gamma_;
    int num_actions_;
    RewardFn reward_;
    // one map per member, keyed by (state << 3) | action (num_actions <= 8)
    std::vector<std::unordered_map<std::uint64_t, double>> tables_;
};

struct ImaginationConfig {
    int n = 30;
    double gamma = 0.3;
    std::uint64_t master_seed = 0;
    bool literal_empathy = false;  // evaluate the formula-literal Eq-style variant
};

/// The self-imagination module for the vat gridworld. Each member i lives in
/// an imaginary MDP over world keys with rewards drawn uniformly per key;
/// trapped keys earn nothing (a trapped agent attains nothing, which is what
/// makes trapped perspectives value-poor).
class ImaginationEngine {
public:
    explicit ImaginationEngine(const ImaginationConfig& config);

    /// Key = (intact-vat bitmask of the state, agent trapped?).
    static StateKey key_of(const EnvState& state);
    /// Key of the perspective swap for human `index`: same world, trapped
    /// flag taken from that human.
    static StateKey swapped_key(const EnvState& state, int index);

    /// Feed one real transition into every member (the only learning signal).
    void observe_transition(const EnvState& state, Action action, const EnvState& next_state);

    /// Side-effect penalty >= 0. Exactly 0 when the transition leaves the
    /// world key unchanged (all movement and Noop).
    double r_nse(const EnvState& state, const EnvState& next_state) const;

    /// Empathy incentive: per human, the ensemble-mean value difference of
    /// the human's perspective after the action vs under the stepwise
    /// inaction baseline, both evaluated in the post-action world. Exactly 0
    /// for the inaction transition and for layouts without humans. The
    /// action argument only feeds the formula-literal variant.
    double r_emp(const EnvState& state, Action action, const EnvState& next_state) const;

    const QEnsemble& ensemble() const { return ensemble_; }
    const ImaginationConfig& config() const { return config_; }

    void save(std::ostream& out) const;
    void load(std::istream& in);

private:
    ImaginationConfig config_;
    QEnsemble ensemble_;
};

}  // namespace smashvat
