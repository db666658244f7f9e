#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "smashvat/grid.hpp"
#include "smashvat/imagination.hpp"
#include "smashvat/net.hpp"

namespace smashvat {

/// One replay entry. r_total is the composite reward, never raw r_env.
struct Transition {
    Observation obs;
    Action action;
    float r_total;
    Observation next_obs;
    bool done;
};

/// FIFO ring buffer.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 100000);
    void push(Transition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const;  // 0 = oldest surviving entry

private:
    std::size_t capacity_, size_ = 0, head_ = 0;
    std::vector<Transition> ring_;
};

/// eps = 1.0 for the first warm_episodes, eps_end for the last final_episodes,
/// linear in between. Episodes are 1-based.
struct EpsilonSchedule {
    int total_episodes = 10000;
    int warm_episodes = 500;
    int final_episodes = 500;
    double eps_start = 1.0;
    double eps_end = 0.01;

    double at(int episode) const;
};

struct TrainConfig {
    std::string layout = "BasicVatGoalEnv";
    int episodes = 10000;
    int warm_episodes = 500;
    int final_episodes = 500;
    int batch_size = 100;
    int target_sync_interval = 1000;  // counted in optimize steps
    double lr = 1e-4;
    double gamma = 0.99;
    int n_imaginary = 30;
    double gamma_imagination = 0.3;
    IntrinsicWeights weights;
    bool use_nse = true;
    bool use_emp = true;
    bool literal_empathy = false;
    std::uint64_t seed = 0;
    NeuronMode neuron_mode = NeuronMode::ReLU;
    LIFParams lif;

    EpsilonSchedule schedule() const {
        return {episodes, warm_episodes, final_episodes, 1.0, 0.01};
    }
};

struct RunRecord {
    int episode = 0;
    double ret = 0.0;  // sum of stored r_total over the episode
    int steps = 0;
    bool reached_goal = false;
    std::optional<double> vat_remain_rate;
    std::optional<double> rescue_rate;
    double epsilon = 0.0;
    double loss_mean = 0.0;  // 0 when no optimize step ran
};

struct TrainResult {
    NetworkParams<float> params;
    std::vector<RunRecord> records;
};

/// epsilon-greedy over the 6 Q-outputs; exploit ties break to the lowest
/// action index.
Action select_action(Network<float>& net, const Observation& obs, double epsilon,
                     std::mt19937_64& rng);

/// One DQN optimization step on an explicit batch: Bellman targets from the
/// target network, MSE on the taken actions, one Adam step. Returns the loss.
double optimize_step(Network<float>& policy, Network<float>& target,
                     AdamOptimizer<float>& opt, const std::vector<const Transition*>& batch,
                     double gamma);

/// Full training loop: per environment step it acts epsilon-greedily, feeds
/// the real transition to the imagination ensemble, composes the reward,
/// stores the transition, and (once the buffer holds a batch) optimizes once;
/// the target network syncs every target_sync_interval optimize steps. The
/// sink, when set, receives each per-episode record as it is produced.
TrainResult run_training(const TrainConfig& config,
                         const std::function<void(const RunRecord&)>& sink = nullptr,
                         ImaginationEngine* engine_out = nullptr);

struct Rollout {
    std::vector<EnvState> states;  // includes the start state
    std::vector<Action> actions;
    EpisodeStats stats;
};

/// Greedy (eps = 0) evaluation episode from the layout's start state.
Rollout greedy_rollout(Network<float>& net, const GridLayout& layout);

}  // namespace smashvat
