#include "smashvat/imagination.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace smashvat {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x51454E53;  // "SNEQ"
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("ensemble checkpoint: truncated stream");
    return v;
}

}  // namespace

double r_total(double r_env, double nse, double emp, const IntrinsicWeights& w) {
    if (w.alpha < 0 || w.beta < 0 || w.alpha + w.beta <= 0)
        throw std::invalid_argument("intrinsic weights must be >= 0 with alpha + beta > 0");
    return (r_env - w.alpha * nse + w.beta * emp) / ((w.alpha + w.beta) / 2.0);
}

double sample_reward(std::uint64_t master_seed, int member, StateKey key) {
    std::uint64_t h = splitmix64(master_seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(member));
    h = splitmix64(h ^ key);
    return static_cast<double>(h >> 11) * 0x1.0p-53;  // top 53 bits -> [0,1)
}

QEnsemble::QEnsemble(int n, double gamma, RewardFn reward, int num_actions)
    : n_(n), gamma_(gamma), num_actions_(num_actions), reward_(std::move(reward)), tables_(n) {
    if (n <= 0) throw std::invalid_argument("ensemble size must be positive");
    if (gamma < 0 || gamma >= 1) throw std::invalid_argument("gamma must lie in [0,1)");
    if (num_actions <= 0 || num_actions > 8)
        throw std::invalid_argument("num_actions must lie in [1,8]");
}

double QEnsemble::reward(int member, StateKey key) const {
    if (member < 0 || member >= n_) throw std::out_of_range("ensemble member out of range");
    return reward_(member, key);
}

double QEnsemble::q(int member, StateKey s, int action) const {
    if (member < 0 || member >= n_) throw std::out_of_range("ensemble member out of range");
    auto it = tables_[member].find((s << 3) | static_cast<std::uint64_t>(action));
    return it == tables_[member].end() ? 0.0 : it->second;
}

double QEnsemble::value(int member, StateKey s) const {
    double best = 0.0;
    for (int a = 0; a < num_actions_; ++a) best = std::max(best, q(member, s, a));
    return best;
}

void QEnsemble::update(StateKey s, int action, StateKey s_next) {
    if (action < 0 || action >= num_actions_) throw std::out_of_range("action out of range");
    std::uint64_t slot = (s << 3) | static_cast<std::uint64_t>(action);
    for (int i = 0; i < n_; ++i) {
        double candidate = reward_(i, s) + gamma_ * value(i, s_next);
        double& cell = tables_[i][slot];
        if (candidate > cell) cell = candidate;
    }
}

void QEnsemble::save(std::ostream& out) const {
    put(out, kCheckpointMagic);
    put(out, kCheckpointVersion);
    put(out, static_cast<std::uint32_t>(n_));
    put(out, static_cast<std::uint32_t>(num_actions_));
    put(out, gamma_);
    for (const auto& table : tables_) {
        put(out, static_cast<std::uint64_t>(table.size()));
        for (const auto& [slot, v] : table) {
            put(out, slot);
            put(out, v);
        }
    }
    if (!out) throw std::runtime_error("ensemble checkpoint: write failure");
}

void QEnsemble::load(std::istream& in) {
    if (get<std::uint32_t>(in) != kCheckpointMagic)
        throw std::runtime_error("ensemble checkpoint: bad magic");
    if (get<std::uint32_t>(in) != kCheckpointVersion)
        throw std::runtime_error("ensemble checkpoint: unsupported version");
    if (get<std::uint32_t>(in) != static_cast<std::uint32_t>(n_) ||
        get<std::uint32_t>(in) != static_cast<std::uint32_t>(num_actions_))
        throw std::runtime_error("ensemble checkpoint: shape mismatch");
    gamma_ = get<double>(in);
    for (auto& table : tables_) {
        table.clear();
        auto count = get<std::uint64_t>(in);
        for (std::uint64_t j = 0; j < count; ++j) {
            auto slot = get<std::uint64_t>(in);
            table[slot] = get<double>(in);
        }
    }
}

namespace {

std::uint64_t vat_mask(const CellGrid& cells) {
    std::uint64_t mask = 0;
    for (int i = 0; i < kRows * kCols; ++i)
        if (cells[i] == CellKind::Vat) mask |= 1ull << i;
    return mask;
}

StateKey pack_key(std::uint64_t mask, bool trapped) { return (mask << 1) | (trapped ? 1u : 0u); }

}  // namespace

ImaginationEngine::ImaginationEngine(const ImaginationConfig& config)
    : config_(config),
      ensemble_(config.n, config.gamma,
                [seed = config.master_seed](int member, StateKey key) {
                    // Trapped keys attain nothing; bit 0 is the trapped flag.
                    if (key & 1) return 0.0;
                    return sample_reward(seed, member, key);
                }) {}

StateKey ImaginationEngine::key_of(const EnvState& state) {
    return pack_key(vat_mask(state.cells), state.agent_trapped);
}

StateKey ImaginationEngine::swapped_key(const EnvState& state, int index) {
    if (index < 0 || index >= static_cast<int>(state.humans.size()))
        throw std::out_of_range("swapped_key: human index out of range");
    return pack_key(vat_mask(state.cells), state.humans[index].trapped);
}

void ImaginationEngine::observe_transition(const EnvState& state, Action action,
                                           const EnvState& next_state) {
    ensemble_.update(key_of(state), static_cast<int>(action), key_of(next_state));
}

double ImaginationEngine::r_nse(const EnvState& state, const EnvState& next_state) const {
    StateKey k = key_of(state);
    StateKey k_next = key_of(next_state);
    if (k == k_next) return 0.0;
    double total = 0.0;
    for (int i = 0; i < ensemble_.size(); ++i) {
        // Converged form of Q_i(s,a) - Q_i(s,noop): both share the per-key
        // reward, leaving gamma * (V_i(s') - V_i(s)).
        double diff = ensemble_.gamma() * (ensemble_.value(i, k_next) - ensemble_.value(i, k));
        total += std::abs(std::min(0.0, diff));
    }
    return total / ensemble_.size();
}

double ImaginationEngine::r_emp(const EnvState& state, Action action,
                                const EnvState& next_state) const {
    if (state.humans.empty()) return 0.0;
    double total = 0.0;
    if (config_.literal_empathy) {
        for (int h = 0; h < static_cast<int>(state.humans.size()); ++h) {
            StateKey k = swapped_key(state, h);
            for (int i = 0; i < ensemble_.size(); ++i)
                total += ensemble_.q(i, k, static_cast<int>(action)) -
                         ensemble_.q(i, k, static_cast<int>(Action::Noop));
        }
        return total / ensemble_.size();
    }
    EnvState baseline = simulate_inaction(state);
    std::uint64_t world = vat_mask(next_state.cells);
    for (int h = 0; h < static_cast<int>(state.humans.size()); ++h) {
        bool trapped_next = next_state.humans[h].trapped;
        bool trapped_base = baseline.humans[h].trapped;
        if (trapped_next == trapped_base) continue;
        StateKey k_next = pack_key(world, trapped_next);
        StateKey k_base = pack_key(world, trapped_base);
        for (int i = 0; i < ensemble_.size(); ++i)
            total += ensemble_.value(i, k_next) - ensemble_.value(i, k_base);
    }
    return total / ensemble_.size();
}

void ImaginationEngine::save(std::ostream& out) const {
    put(out, config_.master_seed);
    ensemble_.save(out);
}

void ImaginationEngine::load(std::istream& in) {
    if (get<std::uint64_t>(in) != config_.master_seed)
        throw std::runtime_error("ensemble checkpoint: master seed mismatch");
    ensemble_.load(in);
}

}  // namespace smashvat
