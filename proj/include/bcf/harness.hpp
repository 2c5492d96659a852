#pragma once

// Experiment runner: wires the policy ensemble, the Monte-Carlo control prior
// and fusion into episodes, writes per-episode CSV logs and a JSON summary,
// re-verifies stored runs and renders SVG plots.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bcf/fusion.hpp"
#include "bcf/nav_env.hpp"
#include "bcf/policy.hpp"
#include "bcf/priors.hpp"
#include "bcf/reacher_env.hpp"

namespace bcf {

enum class Task { Nav, Reacher };
enum class Mode { PriorOnly, PolicyOnly, Bcf };

Task task_from_string(const std::string& s);
const char* to_string(Task task);
Mode mode_from_string(const std::string& s);
const char* to_string(Mode mode);
ActionSelection selection_from_string(const std::string& s);
const char* to_string(ActionSelection selection);

constexpr int kSummarySchemaVersion = 1;
constexpr int kLogSchemaVersion = 1;

struct EnsembleSource {
    std::optional<std::string> weights_path;
    std::optional<SurrogateSpec> surrogate;

    bool configured() const { return weights_path.has_value() || surrogate.has_value(); }
};

struct RunConfig {
    Task task = Task::Nav;
    std::vector<Mode> modes = {Mode::Bcf};
    int episodes = 10;
    std::uint64_t seed = 1;
    ActionSelection selection = ActionSelection::Sample;
    EnsembleSource ensemble;

    ApfParams apf = ApfParams::oscillatory();
    RrmcParams rrmc;
    Eigen::VectorXd floor_std;      // sigma_d per action dimension
    SensorNoiseModel noise;
    int mc_samples = 50;

    nav::NavConfig nav;
    std::vector<std::string> arenas = {"train_1", "train_2", "train_3", "train_4", "train_5"};
    reacher::ReacherConfig reacher;

    int threads = 1;
    std::string output_dir = "runs/latest";

    /// Task defaults: sigma_d (0.3, 0.3) for navigation, 0.25 rad/s per joint
    /// (in normalised units) for the reacher; matching sensor-noise models.
    static RunConfig defaults(Task task);

    /// Throws ConfigError describing the first problem found.
    void validate() const;

    Eigen::Index state_dim() const;
    Eigen::Index action_dim() const;
    double dt() const;
    int horizon() const;
};

/// Overlays the JSON object on RunConfig::defaults of its "task" (or of
/// `fallback_task` when absent). Unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, Task fallback_task = Task::Nav);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::string& path, Task fallback_task = Task::Nav);

SurrogateSpec surrogate_spec_from_json(const nlohmann::json& j, Task task);
nlohmann::json surrogate_spec_to_json(const SurrogateSpec& spec);

/// Everything an episode needs besides the world; immutable during a suite.
struct Controllers {
    std::optional<PolicyEnsemble> ensemble;
    ControlPriorWrapper prior;
};

Controllers build_controllers(const RunConfig& config);

// --- Logs --------------------------------------------------------------------

struct StepRow {
    int step = 0;
    Eigen::VectorXd state;
    std::optional<ActionDistribution<double>> policy;
    std::optional<ActionDistribution<double>> prior;
    ActionDistribution<double> fused{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
    Eigen::VectorXd action;
    double reward = 0.0;
    bool collision = false;      // collision (nav) or self-proximity (reacher)
    bool goal = false;
    bool floor_engaged = false;  // fusion std floor or prior sigma_d floor engaged
    // Navigation: pose before and after the step.
    double x = 0, y = 0, theta = 0, x_next = 0, y_next = 0, d_target = 0;
    // Reacher: after the step.
    double manipulability = 0, error_norm = 0;
};

struct EpisodeLog {
    Task task = Task::Nav;
    Mode mode = Mode::Bcf;
    int episode = 0;
    std::uint64_t seed = 0;
    std::string arena;  // navigation only
    bool out_of_distribution = false;
    std::vector<StepRow> rows;
    std::optional<std::string> error;
};

std::vector<std::string> csv_header(Task task, Eigen::Index state_dim, Eigen::Index action_dim);
/// Full round-trip precision (%.17g); missing distributions are written as nan.
std::string episode_to_csv(const EpisodeLog& log);
/// Parses rows back; throws std::runtime_error naming the line on corrupt input.
std::vector<StepRow> rows_from_csv(const std::string& text, Task task, Eigen::Index state_dim,
                                   Eigen::Index action_dim);

struct EpisodeMetrics {
    bool success = false;       // goal reached at some step and no collision/self-proximity
    bool failure = false;       // collision or self-proximity
    bool aborted = false;
    bool reached = false;
    int steps = 0;
    int steps_to_goal = 0;      // first goal step, or the horizon when never reached
    double actuation_time = 0;  // steps_to_goal * dt
    double path_length = 0;     // navigation: metres travelled until the goal (or the end)
    double mean_manipulability = 0;
    double final_manipulability = 0;
    double mean_policy_std = 0;  // mean over steps and dims of the policy std (nan when absent)
};

EpisodeMetrics compute_metrics(const EpisodeLog& log, double dt, int horizon);
nlohmann::json metrics_to_json(const EpisodeMetrics& m, Task task);

struct Stat {
    double mean = 0;
    double std = 0;
};

struct AggregateMetrics {
    int count = 0;
    int aborted = 0;
    double success_rate = 0;  // percent
    double failure_rate = 0;  // percent; collision / self-proximity
    Stat steps_to_goal;
    Stat actuation_time;
    Stat path_length;
    Stat mean_manipulability;
    Stat final_manipulability;
};

AggregateMetrics aggregate(const std::vector<EpisodeMetrics>& episodes);
nlohmann::json aggregate_to_json(const AggregateMetrics& a, Task task);

// --- Running -------------------------------------------------------------------

/// Counter-based per-episode seed; independent of execution order.
std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t episode_index);

/// Runs one episode. Contract violations inside the loop abort the episode and
/// are recorded in EpisodeLog::error.
EpisodeLog run_nav_episode(const RunConfig& config, Mode mode, const Controllers& controllers, nav::NavWorld& world,
                           int episode_index);
EpisodeLog run_reacher_episode(const RunConfig& config, Mode mode, const Controllers& controllers,
                               reacher::ReacherWorld& world, int episode_index);
EpisodeLog run_episode(const RunConfig& config, Mode mode, const Controllers& controllers, int episode_index);

struct ModeSummary {
    Mode mode = Mode::Bcf;
    std::vector<EpisodeLog> logs;
    std::vector<EpisodeMetrics> metrics;
    AggregateMetrics all;
    AggregateMetrics in_distribution;
    AggregateMetrics out_of_distribution;
};

struct RunSummary {
    RunConfig config;
    std::vector<ModeSummary> modes;

    const ModeSummary& at(Mode mode) const;
};

/// Runs every configured mode over all episodes. When `write` is set, the
/// output directory receives config.json, summary.json, <mode>/episode_NNNN.csv
/// and arenas/*.json.
RunSummary run_suite(const RunConfig& config, bool write = true);

nlohmann::json summary_to_json(const RunSummary& summary);

// --- Verification and plots -----------------------------------------------------

struct VerifyReport {
    bool ok() const { return issues.empty(); }
    std::vector<std::string> issues;
    int files_checked = 0;
    int rows_checked = 0;
};

/// Recomputes every metric and aggregate from the CSV logs and compares with
/// summary.json; recomputes fused moments of bcf rows (tolerance 1e-9) and
/// checks the single-source modes reproduce their source exactly.
VerifyReport verify_run(const std::string& run_dir);

/// Writes plots/<mode>_episode_NNNN.svg for every logged episode and returns
/// the written paths. Throws std::runtime_error naming a missing/corrupt log.
std::vector<std::string> emit_plots(const std::string& run_dir);

struct ArbitrationStats {
    int uncertain_steps = 0;         // steps with policy std > prior std (per dimension)
    int closer_to_prior = 0;         // of those, executed action nearer the prior mean in z-score
    int monotonicity_violations = 0; // triples where |mu_f - mu_prior| shrinks as sigma_policy/sigma_prior grows (or mismatches the product)
};

/// Checks the arbitration behaviour on logged bcf steps.
ArbitrationStats arbitration_stats(const EpisodeLog& log);

}  // namespace bcf
