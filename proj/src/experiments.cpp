#include "smashvat/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "smashvat/maps.hpp"

namespace smashvat {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration -----------------------------------------------------------

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(known.begin(), known.end(),
                         [&key](const char* k) { return key == k; }) == known.end())
            throw std::invalid_argument("unknown config key '" + key + "' in " + where);
    }
}

LIFParams parse_lif(const json& obj) {
    reject_unknown(obj, {"tau", "v_rest", "v_threshold", "reset_mode", "timesteps",
                         "surrogate_width"}, "lif");
    LIFParams lif;
    lif.tau = obj.value("tau", lif.tau);
    lif.v_rest = obj.value("v_rest", lif.v_rest);
    lif.v_threshold = obj.value("v_threshold", lif.v_threshold);
    lif.timesteps = obj.value("timesteps", lif.timesteps);
    lif.surrogate_width = obj.value("surrogate_width", lif.surrogate_width);
    if (obj.contains("reset_mode")) {
        std::string mode = obj["reset_mode"];
        if (mode == "soft_subtract") lif.reset_mode = LIFParams::Reset::SoftSubtract;
        else if (mode == "hard_to_rest") lif.reset_mode = LIFParams::Reset::HardToRest;
        else throw std::invalid_argument("reset_mode must be soft_subtract or hard_to_rest");
    }
    return lif;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json obj = json::parse(json_text);
    reject_unknown(obj,
                   {"layout", "episodes", "warm_episodes", "final_episodes", "batch_size",
                    "target_sync_interval", "lr", "gamma", "n_imaginary", "gamma_imagination",
                    "alpha", "beta", "use_nse", "use_emp", "literal_empathy", "neuron_mode",
                    "lif", "seeds", "output_dir"},
                   "run config");
    RunConfig cfg;
    TrainConfig& t = cfg.train;
    t.layout = obj.value("layout", t.layout);
    t.episodes = obj.value("episodes", t.episodes);
    t.warm_episodes = obj.value("warm_episodes", t.warm_episodes);
    t.final_episodes = obj.value("final_episodes", t.final_episodes);
    t.batch_size = obj.value("batch_size", t.batch_size);
    t.target_sync_interval = obj.value("target_sync_interval", t.target_sync_interval);
    t.lr = obj.value("lr", t.lr);
    t.gamma = obj.value("gamma", t.gamma);
    t.n_imaginary = obj.value("n_imaginary", t.n_imaginary);
    t.gamma_imagination = obj.value("gamma_imagination", t.gamma_imagination);
    t.weights.alpha = obj.value("alpha", t.weights.alpha);
    t.weights.beta = obj.value("beta", t.weights.beta);
    t.use_nse = obj.value("use_nse", t.use_nse);
    t.use_emp = obj.value("use_emp", t.use_emp);
    t.literal_empathy = obj.value("literal_empathy", t.literal_empathy);
    if (obj.contains("neuron_mode")) {
        std::string mode = obj["neuron_mode"];
        if (mode == "relu") t.neuron_mode = NeuronMode::ReLU;
        else if (mode == "lif") t.neuron_mode = NeuronMode::LIF;
        else throw std::invalid_argument("neuron_mode must be relu or lif");
    }
    if (obj.contains("lif")) t.lif = parse_lif(obj["lif"]);
    if (obj.contains("seeds")) cfg.seeds = obj["seeds"].get<std::vector<std::uint64_t>>();
    cfg.output_dir = obj.value("output_dir", cfg.output_dir);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

// --- CSV ----------------------------------------------------------------------

std::string csv_header() {
    return "episode,return,steps,reached_goal,vat_remain_rate,rescue_rate,epsilon,loss_mean";
}

namespace {

std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string csv_row(const RunRecord& rec) {
    std::ostringstream os;
    os << rec.episode << ',' << fixed6(rec.ret) << ',' << rec.steps << ','
       << (rec.reached_goal ? 1 : 0) << ','
       << (rec.vat_remain_rate ? fixed6(*rec.vat_remain_rate) : "-") << ','
       << (rec.rescue_rate ? fixed6(*rec.rescue_rate) : "-") << ',' << fixed6(rec.epsilon)
       << ',' << fixed6(rec.loss_mean);
    return os.str();
}

void write_csv(const std::string& path, const std::vector<RunRecord>& records) {
    std::ofstream out(path, std::ios::binary);  // fixed '\n' endings everywhere
    if (!out) throw std::runtime_error("cannot write " + path);
    out << csv_header() << '\n';
    for (const auto& rec : records) out << csv_row(rec) << '\n';
}

std::vector<RunRecord> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != csv_header())
        throw std::runtime_error("unrecognized CSV header in " + path);
    std::vector<RunRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        RunRecord rec;
        auto next = [&]() {
            if (!std::getline(ls, field, ',')) throw std::runtime_error("short CSV row");
            return field;
        };
        rec.episode = std::stoi(next());
        rec.ret = std::stod(next());
        rec.steps = std::stoi(next());
        rec.reached_goal = next() == "1";
        if (std::string f = next(); f != "-") rec.vat_remain_rate = std::stod(f);
        if (std::string f = next(); f != "-") rec.rescue_rate = std::stod(f);
        rec.epsilon = std::stod(next());
        rec.loss_mean = std::stod(next());
        records.push_back(rec);
    }
    return records;
}

// --- aggregation ---------------------------------------------------------------

Aggregate aggregate_last(const std::vector<std::vector<RunRecord>>& per_seed, int window) {
    Aggregate agg;
    double vat_sum = 0, rescue_sum = 0;
    int vat_seeds = 0, rescue_seeds = 0;
    for (const auto& records : per_seed) {
        if (records.empty()) throw std::invalid_argument("empty record stream");
        int n = std::min<int>(window, static_cast<int>(records.size()));
        double vat = 0, rescue = 0, goal = 0, ret = 0;
        int vat_n = 0, rescue_n = 0;
        for (auto it = records.end() - n; it != records.end(); ++it) {
            if (it->vat_remain_rate) { vat += *it->vat_remain_rate; ++vat_n; }
            if (it->rescue_rate) { rescue += *it->rescue_rate; ++rescue_n; }
            goal += it->reached_goal ? 1.0 : 0.0;
            ret += it->ret;
        }
        if (vat_n) { vat_sum += vat / vat_n; ++vat_seeds; }
        if (rescue_n) { rescue_sum += rescue / rescue_n; ++rescue_seeds; }
        agg.goal_rate += goal / n;
        agg.mean_return += ret / n;
        ++agg.seed_count;
    }
    if (agg.seed_count) {
        agg.goal_rate /= agg.seed_count;
        agg.mean_return /= agg.seed_count;
    }
    if (vat_seeds) agg.vat_remain_rate = vat_sum / vat_seeds;
    if (rescue_seeds) agg.rescue_rate = rescue_sum / rescue_seeds;
    return agg;
}

std::string format_rate(const std::optional<double>& rate) {
    if (!rate) return "-";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.3f", *rate);
    return buf;
}

// --- oracle ---------------------------------------------------------------------

std::uint64_t encode_oracle_state(const EnvState& state) {
    std::uint64_t mask = 0;
    for (int i = 0; i < kRows * kCols; ++i)
        if (state.cells[i] == CellKind::Vat) mask |= 1ull << i;
    std::uint64_t pos = static_cast<std::uint64_t>(state.agent_pos.row * kCols +
                                                   state.agent_pos.col);
    return (pos << 36) | (mask << 1);
}

OracleSolution solve_oracle(const GridLayout& layout, const OracleRewardSpec& spec,
                            double gamma, double tol, std::size_t max_states) {
    struct Edge {
        double reward;
        int next;      // index into states; -1 for terminal
    };
    struct Node {
        EnvState state;
        Edge edges[kNumActions];
        bool terminal;
    };

    auto normalized = [](EnvState s) {
        s.step_count = 0;  // the oracle solves the uncapped discounted MDP
        s.done = false;
        return s;
    };

    std::vector<Node> nodes;
    std::unordered_map<std::uint64_t, int> index;
    std::deque<int> queue;
    EnvState start = reset(layout);
    index[encode_oracle_state(start)] = 0;
    nodes.push_back({start, {}, false});
    queue.push_back(0);

    while (!queue.empty()) {
        int id = queue.front();
        queue.pop_front();
        EnvState here = nodes[id].state;
        for (int a = 0; a < kNumActions; ++a) {
            StepResult sr = step(here, static_cast<Action>(a));
            double r = sr.r_env;
            if (spec.engine) {
                double nse = spec.use_nse ? spec.engine->r_nse(here, sr.next_state) : 0.0;
                double emp = spec.use_emp
                                 ? spec.engine->r_emp(here, static_cast<Action>(a), sr.next_state)
                                 : 0.0;
                r = r_total(sr.r_env, nse, emp, spec.weights);
            }
            bool goal_reached = sr.next_state.at(sr.next_state.agent_pos) == CellKind::Goal;
            if (goal_reached) {
                nodes[id].edges[a] = {r, -1};
                continue;
            }
            EnvState next = normalized(sr.next_state);
            std::uint64_t key = encode_oracle_state(next);
            auto [it, inserted] = index.try_emplace(key, static_cast<int>(nodes.size()));
            if (inserted) {
                if (nodes.size() >= max_states)
                    throw std::runtime_error("oracle: reachable state space too large");
                nodes.push_back({next, {}, false});
                queue.push_back(it->second);
            }
            nodes[id].edges[a] = {r, it->second};
        }
    }

    std::vector<double> v(nodes.size(), 0.0), v_next(nodes.size(), 0.0);
    OracleSolution sol;
    sol.state_count = static_cast<int>(nodes.size());
    double residual = 0.0;
    for (int iter = 0; iter < 100000; ++iter) {
        residual = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            double best = -1e300;
            for (const Edge& e : nodes[i].edges)
                best = std::max(best, e.reward + (e.next < 0 ? 0.0 : gamma * v[e.next]));
            v_next[i] = best;
            residual = std::max(residual, std::abs(best - v[i]));
        }
        v.swap(v_next);
        sol.iterations = iter + 1;
        if (residual < tol) break;
    }
    sol.residual = residual;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::uint64_t key = encode_oracle_state(nodes[i].state);
        sol.values[key] = v[i];
        int best_a = 0;
        double best = -1e300;
        for (int a = 0; a < kNumActions; ++a) {
            const Edge& e = nodes[i].edges[a];
            double q = e.reward + (e.next < 0 ? 0.0 : gamma * v[e.next]);
            if (q > best) { best = q; best_a = a; }
        }
        sol.policy[key] = static_cast<Action>(best_a);
    }
    sol.start_value = sol.values.at(encode_oracle_state(start));
    return sol;
}

double oracle_greedy_env_return(const GridLayout& layout, const OracleSolution& sol) {
    EnvState state = reset(layout);
    double total = 0.0;
    while (!state.done) {
        EnvState probe = state;
        probe.step_count = 0;
        probe.done = false;
        Action a = sol.policy.at(encode_oracle_state(probe));
        StepResult sr = step(state, a);
        total += sr.r_env;
        state = sr.next_state;
    }
    return total;
}

// --- rendering -------------------------------------------------------------------

std::string render_rollout_ascii(const Rollout& rollout) {
    static const char* kActionNames[] = {"Up", "Down", "Left", "Right", "Smash", "Noop"};
    std::ostringstream os;
    for (std::size_t i = 0; i < rollout.states.size(); ++i) {
        os << "step " << i;
        if (i > 0) os << " (" << kActionNames[static_cast<int>(rollout.actions[i - 1])] << ")";
        os << '\n' << render_ascii(rollout.states[i]) << '\n';
    }
    return os.str();
}

std::string render_rollout_svg(const Rollout& rollout) {
    constexpr int cell = 40, margin = 10;
    auto cx = [](Pos p) { return margin + p.col * cell + cell / 2; };
    auto cy = [](Pos p) { return margin + p.row * cell + cell / 2; };
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << (kCols * cell + 2 * margin)
       << "' height='" << (kRows * cell + 2 * margin) << "'>\n";
    const EnvState& first = rollout.states.front();
    for (int r = 0; r < kRows; ++r)
        for (int c = 0; c < kCols; ++c) {
            const char* fill = "#ffffff";
            switch (first.at({r, c})) {
                case CellKind::Wall: fill = "#444444"; break;
                case CellKind::Goal: fill = "#9fdf9f"; break;
                case CellKind::Vat: fill = "#9fc5e8"; break;
                case CellKind::Empty: break;
            }
            os << "<rect x='" << (margin + c * cell) << "' y='" << (margin + r * cell)
               << "' width='" << cell << "' height='" << cell << "' fill='" << fill
               << "' stroke='#888888'/>\n";
        }
    for (const Human& h : first.humans)
        os << "<circle cx='" << cx(h.pos) << "' cy='" << cy(h.pos)
           << "' r='8' fill='#e69138'/>\n";
    os << "<polyline fill='none' stroke='#cc0000' stroke-width='3' points='";
    for (const EnvState& s : rollout.states) os << cx(s.agent_pos) << ',' << cy(s.agent_pos) << ' ';
    os << "'/>\n";
    for (std::size_t i = 0; i < rollout.actions.size(); ++i) {
        if (rollout.actions[i] != Action::Smash) continue;
        Pos p = rollout.states[i].agent_pos;  // where the smash was swung
        int x = cx(p), y = cy(p);
        os << "<path d='M" << (x - 7) << ' ' << (y - 7) << " L" << (x + 7) << ' ' << (y + 7)
           << " M" << (x - 7) << ' ' << (y + 7) << " L" << (x + 7) << ' ' << (y - 7)
           << "' stroke='#000000' stroke-width='3'/>\n";
    }
    os << "<circle cx='" << cx(first.agent_pos) << "' cy='" << cy(first.agent_pos)
       << "' r='6' fill='#cc0000'/>\n</svg>\n";
    return os.str();
}

// --- CLI verbs ---------------------------------------------------------------------

namespace {

std::string run_tag(const TrainConfig& cfg) {
    std::ostringstream os;
    os << cfg.layout << "_a" << cfg.weights.alpha << "_b" << cfg.weights.beta
       << (cfg.use_nse ? "_nse" : "") << (cfg.use_emp ? "_emp" : "")
       << (cfg.neuron_mode == NeuronMode::LIF ? "_lif" : "") << "_s" << cfg.seed;
    return os.str();
}

/// Runs one seed: CSV + checkpoint on disk; returns the records.
std::vector<RunRecord> run_one(TrainConfig cfg, const fs::path& dir) {
    fs::create_directories(dir);
    ImaginationEngine engine({cfg.n_imaginary, cfg.gamma_imagination, 0, cfg.literal_empathy});
    TrainResult result = run_training(cfg, nullptr, &engine);
    std::string tag = run_tag(cfg);
    write_csv((dir / (tag + ".csv")).string(), result.records);
    std::ofstream ckpt(dir / (tag + ".ckpt"), std::ios::binary);
    save_params(ckpt, result.params, cfg.lif);
    engine.save(ckpt);
    return result.records;
}

void print_aggregate(std::ostream& os, const std::string& label, const Aggregate& agg) {
    os << label << ": vat_remain=" << format_rate(agg.vat_remain_rate)
       << " rescue=" << format_rate(agg.rescue_rate) << " goal_rate=" << format_rate(agg.goal_rate)
       << " seeds=" << agg.seed_count << '\n';
}

}  // namespace

int cmd_train(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    std::vector<std::vector<RunRecord>> per_seed;
    for (std::uint64_t seed : cfg.seeds) {
        TrainConfig t = cfg.train;
        t.seed = seed;
        per_seed.push_back(run_one(t, cfg.output_dir));
        std::cout << "seed " << seed << " done\n";
    }
    Aggregate agg = aggregate_last(per_seed);
    std::ofstream summary(fs::path(cfg.output_dir) / "summary.txt");
    print_aggregate(summary, cfg.train.layout, agg);
    print_aggregate(std::cout, cfg.train.layout, agg);
    return 0;
}

int cmd_ablate(const std::string& env_name, const std::string& config_path,
               const std::string& output_dir) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    cfg.train.layout = env_name;
    struct Variant { const char* name; bool nse, emp; };
    const Variant variants[] = {{"R_env", false, false},
                                {"R_env+R_nse", true, false},
                                {"R_env+R_emp", false, true},
                                {"R_total", true, true}};
    for (const Variant& v : variants) {
        std::vector<std::vector<RunRecord>> per_seed;
        for (std::uint64_t seed : cfg.seeds) {
            TrainConfig t = cfg.train;
            t.use_nse = v.nse;
            t.use_emp = v.emp;
            t.seed = seed;
            per_seed.push_back(run_one(t, output_dir));
        }
        print_aggregate(std::cout, std::string(env_name) + " " + v.name,
                        aggregate_last(per_seed));
    }
    return 0;
}

int cmd_sweep(const std::string& env_name, const std::vector<double>& weight_values,
              const std::string& config_path, const std::string& output_dir) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    cfg.train.layout = env_name;
    for (double w : weight_values) {
        std::vector<std::vector<RunRecord>> per_seed;
        for (std::uint64_t seed : cfg.seeds) {
            TrainConfig t = cfg.train;
            t.weights = {w, w};
            t.seed = seed;
            per_seed.push_back(run_one(t, output_dir));
        }
        std::ostringstream label;
        label << env_name << " alpha=beta=" << w;
        print_aggregate(std::cout, label.str(), aggregate_last(per_seed));
    }
    return 0;
}

int cmd_render(const std::string& checkpoint_path, const std::string& env_name,
               const std::string& output_dir) {
    std::ifstream in(checkpoint_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + checkpoint_path);
    LIFParams lif;
    NetworkParams<float> params = load_params(in, lif);
    Network<float> net(std::move(params), lif);
    Rollout rollout = greedy_rollout(net, layout_by_name(env_name));
    std::cout << render_rollout_ascii(rollout);
    fs::create_directories(output_dir);
    fs::path svg = fs::path(output_dir) / (env_name + "_trajectory.svg");
    std::ofstream out(svg);
    out << render_rollout_svg(rollout);
    std::cout << "wrote " << svg.string() << '\n';
    return 0;
}

int cmd_oracle(const std::string& env_name) {
    const GridLayout& layout = layout_by_name(env_name);
    OracleSolution sol = solve_oracle(layout, {});
    std::cout << env_name << ": states=" << sol.state_count << " iterations=" << sol.iterations
              << " residual=" << sol.residual << " start_value=" << sol.start_value
              << " greedy_env_return=" << oracle_greedy_env_return(layout, sol) << '\n';
    return 0;
}

int cmd_report(const std::string& run_dir) {
    std::vector<std::vector<RunRecord>> per_seed;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(run_dir))
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        per_seed.push_back(read_csv(f.string()));
        std::cout << f.filename().string() << ": ";
        print_aggregate(std::cout, "last-100", aggregate_last({per_seed.back()}));
    }
    if (!per_seed.empty()) print_aggregate(std::cout, "all-files mean", aggregate_last(per_seed));
    return 0;
}

}  // namespace smashvat
