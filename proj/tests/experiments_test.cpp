#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "smashvat/experiments.hpp"
#include "smashvat/maps.hpp"

using namespace smashvat;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path dir = fs::temp_directory_path() / "smashvat_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("run config: defaults, overrides, and unknown-key rejection") {
    RunConfig cfg = parse_run_config(R"({
        "layout": "SideHumanVatGoalEnv",
        "episodes": 300,
        "alpha": 5.0,
        "beta": 5.0,
        "neuron_mode": "lif",
        "lif": {"tau": 3.0, "timesteps": 2},
        "seeds": [4, 8],
        "output_dir": "out"
    })");
    CHECK(cfg.train.layout == "SideHumanVatGoalEnv");
    CHECK(cfg.train.episodes == 300);
    CHECK(cfg.train.weights.alpha == 5.0);
    CHECK(cfg.train.neuron_mode == NeuronMode::LIF);
    CHECK(cfg.train.lif.tau == 3.0);
    CHECK(cfg.train.lif.timesteps == 2);
    CHECK(cfg.train.lif.v_threshold == 0.5);  // untouched default
    CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 8});
    CHECK(cfg.train.batch_size == 100);  // defaults stay put

    CHECK_THROWS_WITH(parse_run_config(R"({"episodez": 1})"),
                      doctest::Contains("episodez"));
    CHECK_THROWS_WITH(parse_run_config(R"({"lif": {"tua": 1.0}})"), doctest::Contains("tua"));
    CHECK_THROWS(parse_run_config(R"({"neuron_mode": "spiking"})"));
}

TEST_CASE("CSV: round-trip, dash rendering, byte-identical rewrite") {
    std::vector<RunRecord> records;
    RunRecord a;
    a.episode = 1; a.ret = -0.105; a.steps = 100; a.reached_goal = false;
    a.vat_remain_rate = 1.0; a.epsilon = 1.0; a.loss_mean = 0.012345;
    RunRecord b;
    b.episode = 2; b.ret = 0.087; b.steps = 13; b.reached_goal = true;
    b.rescue_rate = 0.5; b.epsilon = 0.55; b.loss_mean = 0.0;
    records = {a, b};

    CHECK(csv_row(a).find(",-,") != std::string::npos);  // undefined rescue as '-'

    fs::path p1 = temp_dir() / "roundtrip1.csv";
    fs::path p2 = temp_dir() / "roundtrip2.csv";
    write_csv(p1.string(), records);
    std::vector<RunRecord> back = read_csv(p1.string());
    REQUIRE(back.size() == 2);
    CHECK(back[0].vat_remain_rate.has_value());
    CHECK_FALSE(back[0].rescue_rate.has_value());
    CHECK(back[1].rescue_rate == doctest::Approx(0.5));
    CHECK(back[1].reached_goal);

    write_csv(p2.string(), back);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    CHECK(s1.str().rfind(csv_header(), 0) == 0);
}

TEST_CASE("aggregate: last-window means, per seed first, dashes never averaged as zero") {
    auto mk = [](double vat, bool has_rescue, double rescue, bool goal) {
        RunRecord r;
        r.vat_remain_rate = vat;
        if (has_rescue) r.rescue_rate = rescue;
        r.reached_goal = goal;
        return r;
    };
    std::vector<RunRecord> seed1 = {mk(0.0, false, 0, false),  // outside the window
                                    mk(1.0, false, 0, true), mk(0.5, false, 0, true)};
    std::vector<RunRecord> seed2 = {mk(0.25, false, 0, false), mk(0.25, false, 0, true)};
    Aggregate agg = aggregate_last({seed1, seed2}, 2);
    CHECK(agg.seed_count == 2);
    CHECK(*agg.vat_remain_rate == doctest::Approx((0.75 + 0.25) / 2));
    CHECK_FALSE(agg.rescue_rate.has_value());
    CHECK(agg.goal_rate == doctest::Approx((1.0 + 0.5) / 2));
    CHECK(format_rate(agg.rescue_rate) == "-");
    CHECK(format_rate(agg.vat_remain_rate) == "0.500");
}

TEST_CASE("oracle: one-step map has start value 0.99 and residual under tolerance") {
    GridLayout adjacent = parse_map("A....\nG....\n.....\n.....\n.....\n.....\n.....\n");
    OracleSolution sol = solve_oracle(adjacent, {});
    CHECK(sol.start_value == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(sol.residual < 1e-9);
    CHECK(oracle_greedy_env_return(adjacent, sol) == doctest::Approx(0.99));
}

TEST_CASE("oracle: r_env-only optimum smashes through the vat wall") {
    const GridLayout& layout = layout_by_name("BasicVatGoalEnv");
    OracleSolution sol = solve_oracle(layout, {});
    CHECK(sol.state_count > 30);
    // smash route: 5 steps including one smash -> 1.0 - 0.05
    CHECK(oracle_greedy_env_return(layout, sol) == doctest::Approx(0.95));
    // the greedy optimal policy destroys the vat
    EnvState s = reset(layout);
    bool smashed = false;
    while (!s.done) {
        EnvState probe = s;
        probe.step_count = 0;
        probe.done = false;
        Action a = sol.policy.at(encode_oracle_state(probe));
        if (a == Action::Smash) smashed = true;
        s = step(s, a).next_state;
    }
    CHECK(smashed);
    CHECK(s.vat_count() == 0);
}

TEST_CASE("oracle: frozen composite reward flips the optimum to the detour") {
    const GridLayout& layout = layout_by_name("BasicVatGoalEnv");
    ImaginationEngine engine({30, 0.3, 99, false});
    // converge the ensemble by sweeping all reachable transitions
    OracleSolution plain = solve_oracle(layout, {});
    for (int sweep = 0; sweep < 30; ++sweep)
        for (const auto& [key, _] : plain.values) {
            EnvState s = reset(layout);
            // decode: agent position and vat mask
            std::uint64_t pos = key >> 36, mask = (key >> 1) & ((1ull << 35) - 1);
            s.agent_pos = {static_cast<int>(pos) / kCols, static_cast<int>(pos) % kCols};
            for (int i = 0; i < kRows * kCols; ++i)
                if (s.cells[i] == CellKind::Vat && !(mask & (1ull << i)))
                    s.cells[i] = CellKind::Empty;
            s.agent_trapped = s.at(s.agent_pos) == CellKind::Vat;
            if (s.at(s.agent_pos) == CellKind::Goal) continue;
            for (int a = 0; a < kNumActions; ++a)
                engine.observe_transition(s, static_cast<Action>(a),
                                          step(s, static_cast<Action>(a)).next_state);
        }
    OracleRewardSpec spec;
    spec.engine = &engine;
    spec.use_nse = true;
    spec.use_emp = true;
    OracleSolution sol = solve_oracle(layout, spec);
    EnvState s = reset(layout);
    while (!s.done) {
        EnvState probe = s;
        probe.step_count = 0;
        probe.done = false;
        Action a = sol.policy.at(encode_oracle_state(probe));
        CHECK(a != Action::Smash);
        s = step(s, a).next_state;
    }
    CHECK(s.vat_count() == layout.vat_count());  // detour leaves the vat intact
    CHECK(episode_stats(s, layout).reached_goal);
}

TEST_CASE("rendering: ascii frames and svg markers") {
    // scripted rollout: walk down and smash once
    const GridLayout& layout = layout_by_name("BasicVatGoalEnv");
    Rollout roll;
    EnvState s = reset(layout);
    roll.states.push_back(s);
    for (Action a : {Action::Down, Action::Smash, Action::Down, Action::Down, Action::Down}) {
        roll.actions.push_back(a);
        s = step(s, a).next_state;
        roll.states.push_back(s);
    }
    roll.stats = episode_stats(s, layout);
    std::string ascii = render_rollout_ascii(roll);
    CHECK(ascii.find("step 0") != std::string::npos);
    CHECK(ascii.find("(Smash)") != std::string::npos);
    CHECK(ascii.find('*') != std::string::npos);
    std::string svg = render_rollout_svg(roll);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("<path") != std::string::npos);  // the smash cross
}
