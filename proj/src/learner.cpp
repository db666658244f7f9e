#include "smashvat/learner.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "smashvat/maps.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
namespace {
// The batched passes allocate several multi-hundred-KB temporaries per
// optimize step; by default glibc serves those via mmap/munmap round trips,
// which dominates system time. Keep them on the regular heap.
const bool g_malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 64 << 20);
    return true;
}();
}  // namespace
#endif

namespace smashvat {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    ring_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
    if (size_ < capacity_) {
        ring_.push_back(std::move(t));
        ++size_;
    } else {
        ring_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay index out of range");
    return ring_[size_ < capacity_ ? i : (head_ + i) % capacity_];
}

double EpsilonSchedule::at(int episode) const {
    if (episode < 1 || episode > total_episodes)
        throw std::out_of_range("episode outside the schedule");
    if (episode <= warm_episodes) return eps_start;
    if (episode > total_episodes - final_episodes) return eps_end;
    double span = total_episodes - warm_episodes - final_episodes;
    double frac = (episode - warm_episodes) / span;
    return eps_start + (eps_end - eps_start) * frac;
}

namespace {

using Mat = Network<float>::Mat;

Mat to_column(const Observation& obs) {
    return Eigen::Map<const Eigen::Matrix<float, kObsSize, 1>>(obs.data());
}

int argmax_lowest(const Eigen::Ref<const Mat>& q) {
    int best = 0;
    for (int a = 1; a < kNumActions; ++a)
        if (q(a, 0) > q(best, 0)) best = a;
    return best;
}

}  // namespace

Action select_action(Network<float>& net, const Observation& obs, double epsilon,
                     std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<int> pick(0, kNumActions - 1);
        return static_cast<Action>(pick(rng));
    }
    Mat q = net.forward(to_column(obs));
    return static_cast<Action>(argmax_lowest(q));
}

namespace {

std::string obs_key(const Observation& obs) {
    return std::string(reinterpret_cast<const char*>(obs.data()), sizeof(Observation));
}

/// Shared body of optimize_step. When a cache is supplied, max_a Q_target per
/// next-observation is memoized between target syncs (the target network only
/// changes at sync points, so the memo is exact, not approximate).
double optimize_impl(Network<float>& policy, Network<float>& target, AdamOptimizer<float>& opt,
                     const std::vector<const Transition*>& batch, double gamma,
                     std::unordered_map<std::string, float>* cache) {
    int b = static_cast<int>(batch.size());
    if (b == 0) throw std::invalid_argument("optimize_step: empty batch");
    Mat obs(kObsSize, b);
    for (int j = 0; j < b; ++j) obs.col(j) = to_column(batch[j]->obs);

    std::vector<float> next_best(b, 0.0f);
    if (!cache) {
        Mat next_obs(kObsSize, b);
        for (int j = 0; j < b; ++j) next_obs.col(j) = to_column(batch[j]->next_obs);
        Mat q_next = target.forward(next_obs);
        for (int j = 0; j < b; ++j) next_best[j] = q_next.col(j).maxCoeff();
    } else {
        std::vector<std::pair<int, std::string>> misses;
        for (int j = 0; j < b; ++j) {
            if (batch[j]->done) continue;  // bootstrap masked anyway
            std::string key = obs_key(batch[j]->next_obs);
            auto it = cache->find(key);
            if (it != cache->end())
                next_best[j] = it->second;
            else
                misses.emplace_back(j, std::move(key));
        }
        if (!misses.empty()) {
            Mat next_obs(kObsSize, static_cast<Eigen::Index>(misses.size()));
            for (std::size_t m = 0; m < misses.size(); ++m)
                next_obs.col(static_cast<Eigen::Index>(m)) =
                    to_column(batch[misses[m].first]->next_obs);
            Mat q_next = target.forward(next_obs);
            for (std::size_t m = 0; m < misses.size(); ++m) {
                float v = q_next.col(static_cast<Eigen::Index>(m)).maxCoeff();
                next_best[misses[m].first] = v;
                // duplicate keys inside one batch forward to identical columns,
                // so the first inserted value is already the right one
                cache->emplace(std::move(misses[m].second), v);
            }
        }
    }

    Mat q = policy.forward(obs);
    Mat upstream = Mat::Zero(kNumActions, b);
    double loss = 0.0;
    for (int j = 0; j < b; ++j) {
        double y = batch[j]->r_total;
        if (!batch[j]->done) y += gamma * next_best[j];
        int a = static_cast<int>(batch[j]->action);
        double diff = q(a, j) - y;
        loss += diff * diff;
        upstream(a, j) = static_cast<float>(2.0 * diff / b);
    }
    loss /= b;
    if (!std::isfinite(loss)) throw std::runtime_error("optimize_step: non-finite loss");
    opt.step(policy.params(), policy.backward(upstream));
    return loss;
}

}  // namespace

double optimize_step(Network<float>& policy, Network<float>& target,
                     AdamOptimizer<float>& opt, const std::vector<const Transition*>& batch,
                     double gamma) {
    return optimize_impl(policy, target, opt, batch, gamma, nullptr);
}

TrainResult run_training(const TrainConfig& config,
                         const std::function<void(const RunRecord&)>& sink,
                         ImaginationEngine* engine_out) {
    const GridLayout& layout = layout_by_name(config.layout);
    EpsilonSchedule schedule = config.schedule();

    std::mt19937_64 rng(config.seed);
    ImaginationConfig im;
    im.n = config.n_imaginary;
    im.gamma = config.gamma_imagination;
    im.master_seed = config.seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull;
    im.literal_empathy = config.literal_empathy;
    ImaginationEngine engine(im);

    Network<float> policy(NetworkParams<float>::init(config.seed, config.neuron_mode),
                          config.lif);
    Network<float> target(copy_params(policy.params()), config.lif);
    AdamOptimizer<float> opt(config.lr);
    ReplayBuffer buffer;
    std::uniform_int_distribution<std::size_t> sample_dist;

    TrainResult result;
    result.records.reserve(config.episodes);
    long optimize_steps = 0;
    std::unordered_map<std::string, float> target_cache;

    for (int ep = 1; ep <= config.episodes; ++ep) {
        double eps = schedule.at(ep);
        EnvState state = reset(layout);
        RunRecord rec;
        rec.episode = ep;
        rec.epsilon = eps;
        double loss_sum = 0.0;
        int loss_count = 0;

        while (!state.done) {
            Action a = select_action(policy, observe(state), eps, rng);
            StepResult sr = step(state, a);
            engine.observe_transition(state, a, sr.next_state);
            double nse = config.use_nse ? engine.r_nse(state, sr.next_state) : 0.0;
            double emp = config.use_emp ? engine.r_emp(state, a, sr.next_state) : 0.0;
            double rt = r_total(sr.r_env, nse, emp, config.weights);
            // The stored done flag marks environment-terminal transitions
            // (goal reached) only. The 100-step cap is a truncation of data
            // collection, not a feature of the MDP — step count is not part
            // of the observation, so masking the bootstrap there would teach
            // inconsistent values for the same observed state.
            bool at_goal =
                sr.next_state.at(sr.next_state.agent_pos) == CellKind::Goal;
            buffer.push({observe(state), a, static_cast<float>(rt), observe(sr.next_state),
                         at_goal});
            rec.ret += rt;
            ++rec.steps;
            if (buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
                std::vector<const Transition*> batch(config.batch_size);
                std::uniform_int_distribution<std::size_t> dist(0, buffer.size() - 1);
                for (auto& slot : batch) slot = &buffer.at(dist(rng));
                loss_sum +=
                    optimize_impl(policy, target, opt, batch, config.gamma, &target_cache);
                ++loss_count;
                if (++optimize_steps % config.target_sync_interval == 0) {
                    target.params() = copy_params(policy.params());
                    target_cache.clear();
                }
            }
            state = sr.next_state;
        }

        EpisodeStats stats = episode_stats(state, layout);
        rec.reached_goal = stats.reached_goal;
        rec.vat_remain_rate = stats.vat_remain_rate;
        rec.rescue_rate = stats.rescue_rate;
        if (loss_count > 0) rec.loss_mean = loss_sum / loss_count;
        if (sink) sink(rec);
        result.records.push_back(rec);
    }
    result.params = policy.params();
    if (engine_out) *engine_out = std::move(engine);
    return result;
}

Rollout greedy_rollout(Network<float>& net, const GridLayout& layout) {
    Rollout out;
    EnvState state = reset(layout);
    out.states.push_back(state);
    while (!state.done) {
        Mat q = net.forward(to_column(observe(state)));
        auto a = static_cast<Action>(argmax_lowest(q));
        out.actions.push_back(a);
        state = step(state, a).next_state;
        out.states.push_back(state);
    }
    out.stats = episode_stats(state, layout);
    return out;
}

}  // namespace smashvat
