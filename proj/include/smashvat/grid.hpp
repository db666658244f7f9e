#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace smashvat {

inline constexpr int kRows = 7;
inline constexpr int kCols = 5;
inline constexpr int kNumActions = 6;
inline constexpr int kObsChannels = 3;
inline constexpr int kObsSize = kObsChannels * kRows * kCols;
inline constexpr int kMaxSteps = 100;

enum class CellKind : std::uint8_t { Empty = 0, Wall = 1, Goal = 2, Vat = 3 };

// Output index of the policy network is the action index.
enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3, Smash = 4, Noop = 5 };

struct Pos {
    int row = 0;
    int col = 0;
    friend bool operator==(const Pos&, const Pos&) = default;
    friend auto operator<=>(const Pos&, const Pos&) = default;
};

using CellGrid = std::array<CellKind, kRows * kCols>;

struct GridLayout {
    std::string name;
    CellGrid cells{};
    Pos agent_start;
    std::vector<Pos> humans_start;  // every entry coincides with a Vat cell

    CellKind at(Pos p) const { return cells[p.row * kCols + p.col]; }
    int vat_count() const;
};

struct Human {
    Pos pos;
    bool trapped = true;
};

struct EnvState {
    CellGrid cells{};
    Pos agent_pos;
    bool agent_trapped = false;
    std::vector<Human> humans;
    int step_count = 0;
    bool done = false;
    bool smashed_last = false;  // render hint: '*' overlay for one frame

    CellKind at(Pos p) const { return cells[p.row * kCols + p.col]; }
    void set(Pos p, CellKind k) { cells[p.row * kCols + p.col] = k; }
    int vat_count() const;
};

struct StepResult {
    EnvState next_state;
    double r_env = 0.0;
    bool terminal = false;
};

struct EpisodeStats {
    std::optional<double> vat_remain_rate;  // empty when the layout has no vats
    std::optional<double> rescue_rate;      // empty when the layout has no humans
    bool reached_goal = false;
    int steps = 0;
};

// Observation tensor, channel-major: [channel][row][col].
// Channel 0: cell codes (Empty 0, Wall 1, Goal 2, Vat 3).
// Channel 1: one-hot agent position. Channel 2: one-hot human positions.
using Observation = std::array<float, kObsSize>;

/// Parses a 7-line x 5-glyph map. Alphabet: '#' wall, '.' empty, 'G' goal,
/// 'V' vat, 'A' agent start, 'H' human trapped in a vat.
/// Throws std::invalid_argument with line/column on malformed input.
GridLayout parse_map(const std::string& text, const std::string& name = "");

EnvState reset(const GridLayout& layout);

/// One environment step. Movement into walls or off-grid is blocked; vats
/// and humans never block. A trapped agent's actions all behave as Noop.
/// Smash empties the <=4 orthogonally adjacent vat cells and frees humans
/// standing on them. r_env = -0.01 per step, +1.00 on reaching the goal.
StepResult step(const EnvState& state, Action action);

/// The stepwise inaction baseline: step(state, Noop).next_state.
EnvState simulate_inaction(const EnvState& state);

Observation observe(const EnvState& state);

/// State with the agent at human `index`'s position and the human at the
/// agent's former position; trapped flags recomputed from the cells.
EnvState perspective_swap(const EnvState& state, int index);

EpisodeStats episode_stats(const EnvState& final_state, const GridLayout& layout);

/// 7 lines of 5 glyphs: map alphabet plus 'a' free agent, 'A' trapped agent,
/// 'h' free human, 'H' trapped human, '*' smash overlay at the agent cell.
std::string render_ascii(const EnvState& state);

inline bool in_bounds(Pos p) {
    return p.row >= 0 && p.row < kRows && p.col >= 0 && p.col < kCols;
}

}  // namespace smashvat
