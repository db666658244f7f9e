#include <doctest.h>

#include <algorithm>
#include <deque>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "smashvat/grid.hpp"
#include "smashvat/maps.hpp"

using namespace smashvat;

namespace {

std::string obs_bytes(const Observation& obs) {
    return std::string(reinterpret_cast<const char*>(obs.data()), sizeof(obs));
}

std::string state_signature(const EnvState& s) {
    std::string sig(reinterpret_cast<const char*>(s.cells.data()), s.cells.size());
    sig += static_cast<char>(s.agent_pos.row);
    sig += static_cast<char>(s.agent_pos.col);
    for (const Human& h : s.humans) {
        sig += static_cast<char>(h.pos.row);
        sig += static_cast<char>(h.pos.col);
        sig += h.trapped ? '1' : '0';
    }
    return sig;
}

/// All states reachable from reset, ignoring the step cap.
std::vector<EnvState> enumerate_states(const GridLayout& layout) {
    std::vector<EnvState> out;
    std::unordered_set<std::string> seen;
    std::deque<EnvState> queue;
    EnvState start = reset(layout);
    seen.insert(state_signature(start));
    queue.push_back(start);
    while (!queue.empty()) {
        EnvState here = queue.front();
        queue.pop_front();
        out.push_back(here);
        if (here.at(here.agent_pos) == CellKind::Goal) continue;
        for (int a = 0; a < kNumActions; ++a) {
            EnvState next = step(here, static_cast<Action>(a)).next_state;
            next.step_count = 0;
            next.done = false;
            next.smashed_last = false;
            if (seen.insert(state_signature(next)).second) queue.push_back(next);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("map parsing: canonical layouts load and shape up") {
    for (const auto& name : layout_names()) {
        const GridLayout& layout = layout_by_name(name);
        CHECK(layout.name == name);
        CHECK(std::count(layout.cells.begin(), layout.cells.end(), CellKind::Goal) == 1);
        for (Pos h : layout.humans_start) CHECK(layout.at(h) == CellKind::Vat);
    }
    CHECK_THROWS_AS(layout_by_name("NoSuchEnv"), std::out_of_range);
}

TEST_CASE("map parsing: malformed inputs are rejected with positions") {
    CHECK_THROWS_AS(parse_map("....\n"), std::invalid_argument);  // wrong line count
    CHECK_THROWS_WITH(parse_map(".....\n.....\n.....\n.....\n.....\n.....\n...\n"),
                      doctest::Contains("line 7"));
    CHECK_THROWS_WITH(parse_map("X....\n.....\n.....\n.....\nG....\nA....\n.....\n"),
                      doctest::Contains("column 1"));
    // no goal / two goals / no agent / two agents
    CHECK_THROWS(parse_map("A....\n.....\n.....\n.....\n.....\n.....\n.....\n"));
    CHECK_THROWS(parse_map("A...G\n....G\n.....\n.....\n.....\n.....\n.....\n"));
    CHECK_THROWS(parse_map("G....\n.....\n.....\n.....\n.....\n.....\n.....\n"));
    CHECK_THROWS(parse_map("A...A\nG....\n.....\n.....\n.....\n.....\n.....\n"));
}

TEST_CASE("step: movement, walls, and borders") {
    GridLayout layout = parse_map("A#...\n.....\n.....\n.....\n.....\n.....\nG....\n");
    EnvState s = reset(layout);
    CHECK(step(s, Action::Up).next_state.agent_pos == Pos{0, 0});     // border blocks
    CHECK(step(s, Action::Right).next_state.agent_pos == Pos{0, 0});  // wall blocks
    CHECK(step(s, Action::Down).next_state.agent_pos == Pos{1, 0});
    CHECK(step(s, Action::Down).r_env == doctest::Approx(-0.01));
}

TEST_CASE("step: goal pays +0.99 net and terminates") {
    GridLayout layout = parse_map("A....\nG....\n.....\n.....\n.....\n.....\n.....\n");
    StepResult sr = step(reset(layout), Action::Down);
    CHECK(sr.r_env == doctest::Approx(0.99));
    CHECK(sr.terminal);
    CHECK_THROWS_AS(step(sr.next_state, Action::Up), std::logic_error);
}

TEST_CASE("step: smash clears all adjacent vats and frees humans") {
    GridLayout layout = parse_map(".V...\nVAH..\n.V...\n.....\n.....\n.....\nG....\n");
    EnvState s = reset(layout);
    CHECK(s.vat_count() == 4);
    EnvState next = step(s, Action::Smash).next_state;
    CHECK(next.vat_count() == 0);
    CHECK(next.smashed_last);
    REQUIRE(next.humans.size() == 1);
    CHECK_FALSE(next.humans[0].trapped);
}

TEST_CASE("step: vats do not block; entering one traps the agent forever") {
    GridLayout layout = parse_map("A....\nV....\n.....\n.....\n.....\n.....\nG....\n");
    EnvState s = step(reset(layout), Action::Down).next_state;
    CHECK(s.agent_trapped);
    // trap absorption: every action behaves as Noop afterwards
    for (int a = 0; a < kNumActions; ++a) {
        EnvState after = step(s, static_cast<Action>(a)).next_state;
        CHECK(after.agent_pos == s.agent_pos);
        CHECK(after.cells == s.cells);
        CHECK(after.agent_trapped);
    }
}

TEST_CASE("step: episodes cap at kMaxSteps") {
    const GridLayout& layout = layout_by_name("BasicVatGoalEnv");
    EnvState s = reset(layout);
    for (int i = 0; i < kMaxSteps; ++i) s = step(s, Action::Noop).next_state;
    CHECK(s.done);
    CHECK(s.step_count == kMaxSteps);
}

TEST_CASE("observation: channel codes and one-hots") {
    const GridLayout& layout = layout_by_name("BasicHumanVatGoalEnv");
    EnvState s = reset(layout);
    Observation obs = observe(s);
    int plane = kRows * kCols;
    CHECK(obs[2 * kCols + 0] == 1.0f);  // wall at (2,0)
    CHECK(obs[2 * kCols + 1] == 3.0f);  // vat at (2,1)
    CHECK(obs[4 * kCols + 1] == 2.0f);  // goal at (4,1)
    CHECK(obs[plane + 0 * kCols + 1] == 1.0f);      // agent at (0,1)
    CHECK(obs[2 * plane + 2 * kCols + 1] == 1.0f);  // human at (2,1)
    float ch1 = 0, ch2 = 0;
    for (int i = 0; i < plane; ++i) {
        ch1 += obs[plane + i];
        ch2 += obs[2 * plane + i];
    }
    CHECK(ch1 == 1.0f);
    CHECK(ch2 == 1.0f);
}

TEST_CASE("observation: injective over every layout's reachable states") {
    for (const auto& name : layout_names()) {
        std::vector<EnvState> states = enumerate_states(layout_by_name(name));
        std::set<std::string> encodings;
        std::set<std::string> signatures;
        for (const EnvState& s : states) {
            encodings.insert(obs_bytes(observe(s)));
            signatures.insert(state_signature(s));
        }
        // humans that share the agent's cell are the only collision candidates;
        // the canonical layouts never produce one
        CHECK(encodings.size() == signatures.size());
        CHECK(states.size() == signatures.size());
    }
}

TEST_CASE("perspective_swap swaps positions and recomputes trapped flags") {
    const GridLayout& layout = layout_by_name("BasicHumanVatGoalEnv");
    EnvState s = reset(layout);
    EnvState swapped = perspective_swap(s, 0);
    CHECK(swapped.agent_pos == Pos{2, 1});
    CHECK(swapped.humans[0].pos == s.agent_pos);
    CHECK(swapped.agent_trapped);           // the vat cell is intact
    CHECK_FALSE(swapped.humans[0].trapped); // the agent's start cell is empty
    CHECK_THROWS_AS(perspective_swap(s, 1), std::out_of_range);
}

TEST_CASE("episode_stats rates and undefined cases") {
    const GridLayout& no_humans = layout_by_name("BasicVatGoalEnv");
    EnvState s = reset(no_humans);
    for (int i = 0; i < kMaxSteps; ++i) s = step(s, Action::Noop).next_state;
    EpisodeStats st = episode_stats(s, no_humans);
    CHECK(st.vat_remain_rate == doctest::Approx(1.0));
    CHECK_FALSE(st.rescue_rate.has_value());
    CHECK_FALSE(st.reached_goal);

    GridLayout wall_only = parse_map("A....\nG....\n.....\n.....\n.....\n.....\n.....\n");
    EnvState done = step(reset(wall_only), Action::Down).next_state;
    EpisodeStats st2 = episode_stats(done, wall_only);
    CHECK_FALSE(st2.vat_remain_rate.has_value());
    CHECK(st2.reached_goal);
    CHECK_THROWS_AS(episode_stats(reset(wall_only), wall_only), std::logic_error);
}

TEST_CASE("render_ascii glyph conventions") {
    const GridLayout& layout = layout_by_name("BasicHumanVatGoalEnv");
    EnvState s = reset(layout);
    std::string frame = render_ascii(s);
    CHECK(frame.find('a') != std::string::npos);
    CHECK(frame.find('H') != std::string::npos);
    CHECK(frame.find('G') != std::string::npos);
    EnvState at_vat = s;
    at_vat.agent_pos = {1, 1};
    EnvState smashed = step(at_vat, Action::Smash).next_state;
    CHECK(render_ascii(smashed).find('*') != std::string::npos);
    CHECK(render_ascii(smashed).find('h') != std::string::npos);
}

TEST_CASE("fuzz: random action sequences keep every invariant") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> pick_layout(0, 5);
    std::uniform_int_distribution<int> pick_action(0, kNumActions - 1);
    auto names = layout_names();
    for (int trial = 0; trial < 200; ++trial) {
        const GridLayout& layout = layout_by_name(names[pick_layout(rng)]);
        EnvState s = reset(layout);
        int prev_vats = s.vat_count();
        while (!s.done) {
            EnvState next = step(s, static_cast<Action>(pick_action(rng))).next_state;
            // walls never entered, vat count never grows, freed humans stay freed
            CHECK(next.at(next.agent_pos) != CellKind::Wall);
            CHECK(next.vat_count() <= prev_vats);
            for (std::size_t h = 0; h < s.humans.size(); ++h)
                if (!s.humans[h].trapped) CHECK_FALSE(next.humans[h].trapped);
            prev_vats = next.vat_count();
            s = next;
        }
        CHECK(s.step_count <= kMaxSteps);
    }
}

TEST_CASE("determinism: step is a pure function of state and action") {
    const GridLayout& layout = layout_by_name("SmashAndDetourEnv");
    EnvState s = reset(layout);
    for (int a = 0; a < kNumActions; ++a) {
        StepResult r1 = step(s, static_cast<Action>(a));
        StepResult r2 = step(s, static_cast<Action>(a));
        CHECK(state_signature(r1.next_state) == state_signature(r2.next_state));
        CHECK(r1.r_env == r2.r_env);
    }
}
