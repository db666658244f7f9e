#include "smashvat/grid.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace smashvat {

namespace {

int count_vats(const CellGrid& cells) {
    return static_cast<int>(std::count(cells.begin(), cells.end(), CellKind::Vat));
}

[[noreturn]] void parse_fail(int line, int col, const std::string& what) {
    std::ostringstream os;
    os << "map parse error at line " << line + 1 << ", column " << col + 1 << ": " << what;
    throw std::invalid_argument(os.str());
}

}  // namespace

int GridLayout::vat_count() const { return count_vats(cells); }
int EnvState::vat_count() const { return count_vats(cells); }

GridLayout parse_map(const std::string& text, const std::string& name) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();

    if (static_cast<int>(lines.size()) != kRows) {
        std::ostringstream os;
        os << "map parse error: expected " << kRows << " lines, got " << lines.size();
        throw std::invalid_argument(os.str());
    }

    GridLayout layout;
    layout.name = name;
    bool have_agent = false;
    int goals = 0;
    for (int r = 0; r < kRows; ++r) {
        if (static_cast<int>(lines[r].size()) != kCols)
            parse_fail(r, static_cast<int>(lines[r].size()),
                       "expected " + std::to_string(kCols) + " glyphs per line");
        for (int c = 0; c < kCols; ++c) {
            CellKind kind;
            switch (lines[r][c]) {
                case '#': kind = CellKind::Wall; break;
                case '.': kind = CellKind::Empty; break;
                case 'G': kind = CellKind::Goal; ++goals; break;
                case 'V': kind = CellKind::Vat; break;
                case 'H':
                    kind = CellKind::Vat;
                    layout.humans_start.push_back({r, c});
                    break;
                case 'A':
                    kind = CellKind::Empty;
                    if (have_agent) parse_fail(r, c, "multiple agent starts");
                    have_agent = true;
                    layout.agent_start = {r, c};
                    break;
                default: parse_fail(r, c, std::string("unknown glyph '") + lines[r][c] + "'");
            }
            layout.cells[r * kCols + c] = kind;
        }
    }
    if (goals != 1)
        throw std::invalid_argument("map parse error: expected exactly one goal, got " +
                                    std::to_string(goals));
    if (!have_agent) throw std::invalid_argument("map parse error: no agent start");
    return layout;
}

EnvState reset(const GridLayout& layout) {
    EnvState s;
    s.cells = layout.cells;
    s.agent_pos = layout.agent_start;
    s.agent_trapped = false;
    for (Pos p : layout.humans_start) s.humans.push_back({p, true});
    return s;
}

StepResult step(const EnvState& state, Action action) {
    if (state.done) throw std::logic_error("step() on a finished episode");

    EnvState next = state;
    next.smashed_last = false;
    if (state.agent_trapped) action = Action::Noop;

    switch (action) {
        case Action::Up:
        case Action::Down:
        case Action::Left:
        case Action::Right: {
            static constexpr int dr[] = {-1, 1, 0, 0};
            static constexpr int dc[] = {0, 0, -1, 1};
            int a = static_cast<int>(action);
            Pos target{state.agent_pos.row + dr[a], state.agent_pos.col + dc[a]};
            if (in_bounds(target) && state.at(target) != CellKind::Wall) next.agent_pos = target;
            break;
        }
        case Action::Smash: {
            Pos p = state.agent_pos;
            const Pos nbrs[] = {{p.row - 1, p.col}, {p.row + 1, p.col},
                                {p.row, p.col - 1}, {p.row, p.col + 1}};
            for (Pos q : nbrs) {
                if (!in_bounds(q) || state.at(q) != CellKind::Vat) continue;
                next.set(q, CellKind::Empty);
                next.smashed_last = true;
                for (Human& h : next.humans)
                    if (h.pos == q) h.trapped = false;
            }
            break;
        }
        case Action::Noop:
            break;
    }

    next.agent_trapped = next.at(next.agent_pos) == CellKind::Vat;
    next.step_count = state.step_count + 1;

    double r = -0.01;
    bool at_goal = next.at(next.agent_pos) == CellKind::Goal;
    if (at_goal) r += 1.0;
    next.done = at_goal || next.step_count >= kMaxSteps;
    return {next, r, next.done};
}

EnvState simulate_inaction(const EnvState& state) { return step(state, Action::Noop).next_state; }

Observation observe(const EnvState& state) {
    Observation obs{};
    for (int i = 0; i < kRows * kCols; ++i)
        obs[i] = static_cast<float>(static_cast<int>(state.cells[i]));
    obs[kRows * kCols + state.agent_pos.row * kCols + state.agent_pos.col] = 1.0f;
    for (const Human& h : state.humans)
        obs[2 * kRows * kCols + h.pos.row * kCols + h.pos.col] = 1.0f;
    return obs;
}

EnvState perspective_swap(const EnvState& state, int index) {
    if (index < 0 || index >= static_cast<int>(state.humans.size()))
        throw std::out_of_range("perspective_swap: human index out of range");
    EnvState swapped = state;
    Pos hpos = state.humans[index].pos;
    swapped.agent_pos = hpos;
    swapped.humans[index].pos = state.agent_pos;
    swapped.agent_trapped = swapped.at(swapped.agent_pos) == CellKind::Vat;
    swapped.humans[index].trapped = swapped.at(swapped.humans[index].pos) == CellKind::Vat;
    return swapped;
}

EpisodeStats episode_stats(const EnvState& final_state, const GridLayout& layout) {
    if (!final_state.done) throw std::logic_error("episode_stats() on a running episode");
    EpisodeStats st;
    st.steps = final_state.step_count;
    st.reached_goal = final_state.at(final_state.agent_pos) == CellKind::Goal;
    if (int v0 = layout.vat_count(); v0 > 0)
        st.vat_remain_rate = static_cast<double>(final_state.vat_count()) / v0;
    if (!layout.humans_start.empty()) {
        int freed = 0;
        for (const Human& h : final_state.humans)
            if (!h.trapped) ++freed;
        st.rescue_rate = static_cast<double>(freed) / final_state.humans.size();
    }
    return st;
}

std::string render_ascii(const EnvState& state) {
    std::string out;
    for (int r = 0; r < kRows; ++r) {
        for (int c = 0; c < kCols; ++c) {
            char g = '.';
            switch (state.at({r, c})) {
                case CellKind::Empty: g = '.'; break;
                case CellKind::Wall: g = '#'; break;
                case CellKind::Goal: g = 'G'; break;
                case CellKind::Vat: g = 'V'; break;
            }
            for (const Human& h : state.humans)
                if (h.pos == Pos{r, c}) g = h.trapped ? 'H' : 'h';
            if (state.agent_pos == Pos{r, c}) {
                g = state.agent_trapped ? 'A' : 'a';
                if (state.smashed_last) g = '*';
            }
            out.push_back(g);
        }
        out.push_back('\n');
    }
    return out;
}

}  // namespace smashvat
