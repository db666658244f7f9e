#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "smashvat/learner.hpp"

namespace smashvat {

/// On-disk run configuration: a TrainConfig template plus seed list and
/// output directory. Unknown keys are rejected by name.
struct RunConfig {
    TrainConfig train;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6};
    std::string output_dir = "runs";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// --- RunRecord CSV ----------------------------------------------------------

std::string csv_header();
/// Undefined rates are rendered as '-'; formatting is fixed so identical
/// configurations produce byte-identical files.
std::string csv_row(const RunRecord& rec);
void write_csv(const std::string& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_csv(const std::string& path);

// --- Aggregation ------------------------------------------------------------

/// Per-seed last-`window` means, then the mean over seeds. Undefined rates
/// stay undefined (never averaged as zeros).
struct Aggregate {
    std::optional<double> vat_remain_rate;
    std::optional<double> rescue_rate;
    double goal_rate = 0.0;
    double mean_return = 0.0;
    int seed_count = 0;
};

Aggregate aggregate_last(const std::vector<std::vector<RunRecord>>& per_seed,
                         int window = 100);

/// "0.992" style cell or "-" for undefined.
std::string format_rate(const std::optional<double>& rate);

// --- Tabular oracle ---------------------------------------------------------

/// Exact solution of a layout's deterministic MDP by reachable-state
/// enumeration + value iteration. When an engine is supplied the reward is
/// the frozen composite (Eq.-4 style) under the given weights and gates;
/// otherwise plain r_env.
struct OracleRewardSpec {
    const ImaginationEngine* engine = nullptr;  // frozen; not updated
    IntrinsicWeights weights;
    bool use_nse = false;
    bool use_emp = false;
};

struct OracleSolution {
    std::unordered_map<std::uint64_t, double> values;   // encoded state -> V*
    std::unordered_map<std::uint64_t, Action> policy;   // one optimal action
    double start_value = 0.0;
    double residual = 0.0;
    int state_count = 0;
    int iterations = 0;
};

std::uint64_t encode_oracle_state(const EnvState& state);

OracleSolution solve_oracle(const GridLayout& layout, const OracleRewardSpec& spec,
                            double gamma = 0.99, double tol = 1e-9,
                            std::size_t max_states = 1000000);

/// Greedy return of the oracle policy from the start state (undiscounted sum
/// of r_env over at most kMaxSteps, matching episode accounting).
double oracle_greedy_env_return(const GridLayout& layout, const OracleSolution& sol);

// --- Rendering --------------------------------------------------------------

/// Frame-by-frame ASCII rendering of a rollout.
std::string render_rollout_ascii(const Rollout& rollout);
/// Single annotated SVG: grid, trajectory path, cross markers on smashes.
std::string render_rollout_svg(const Rollout& rollout);

// --- CLI verbs (return process exit codes) -----------------------------------

int cmd_train(const std::string& config_path);
int cmd_ablate(const std::string& env_name, const std::string& config_path,
               const std::string& output_dir);
int cmd_sweep(const std::string& env_name, const std::vector<double>& weight_values,
              const std::string& config_path, const std::string& output_dir);
int cmd_render(const std::string& checkpoint_path, const std::string& env_name,
               const std::string& output_dir);
int cmd_oracle(const std::string& env_name);
int cmd_report(const std::string& run_dir);

}  // namespace smashvat
