#include "bcf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "bcf/errors.hpp"

namespace bcf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Stat stat_of(const std::vector<double>& xs) {
    if (xs.empty()) return {kNaN, kNaN};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

json stat_json(const Stat& s) { return {{"mean", number_or_null(s.mean)}, {"std", number_or_null(s.std)}}; }

std::string episode_file(Mode mode, int index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s/episode_%04d.csv", to_string(mode), index);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

ActionDistribution<double> select_source(Mode mode, const std::optional<ActionDistribution<double>>& policy,
                                         const ActionDistribution<double>& prior) {
    if (mode == Mode::PriorOnly) return prior;
    BCF_REQUIRE(policy.has_value(), "policy distribution required in this mode");
    if (mode == Mode::PolicyOnly) return *policy;
    return fuse(*policy, prior);
}

struct StepOutcome {
    ActionDistribution<double> fused;
    Eigen::VectorXd action;
    bool floor_engaged;
};

StepOutcome decide(const RunConfig& config, Mode mode, const std::optional<ActionDistribution<double>>& policy,
                   const PriorEstimate& prior, std::mt19937_64& action_rng) {
    const auto bounds = ActionBounds<double>::symmetric(config.action_dim(), 1.0);
    bool floor = prior.floor_engaged.any();
    if (mode == Mode::Bcf) {
        BCF_REQUIRE(policy.has_value(), "bcf mode requires the policy ensemble");
        auto rec = bcf_step(*policy, prior.distribution, action_rng, bounds, config.selection);
        return {rec.fused, rec.action, floor || rec.floor_engaged};
    }
    ActionDistribution<double> src = select_source(mode, policy, prior.distribution);
    if (mode == Mode::PolicyOnly) floor = false;
    Eigen::VectorXd a = select_action(src, config.selection, action_rng, bounds);
    return {src, a, floor};
}

struct EpisodeStreams {
    std::mt19937_64 reset, mc, action;
    explicit EpisodeStreams(std::uint64_t seed)
        : reset(splitmix64(seed ^ 1)), mc(splitmix64(seed ^ 2)), action(splitmix64(seed ^ 3)) {}
};

}  // namespace

std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t episode_index) {
    return splitmix64(splitmix64(master_seed) ^ (episode_index * 0xD1B54A32D192ED03ULL + 1));
}

EpisodeLog run_nav_episode(const RunConfig& config, Mode mode, const Controllers& controllers, nav::NavWorld& world,
                           int episode_index) {
    EpisodeLog log;
    log.task = Task::Nav;
    log.mode = mode;
    log.episode = episode_index;
    log.seed = episode_seed(config.seed, static_cast<std::uint64_t>(episode_index));
    log.arena = world.arena().name;
    log.out_of_distribution = world.arena().out_of_distribution;
    EpisodeStreams rng(log.seed);
    try {
        nav::Observation obs = world.reset(rng.reset);
        for (int t = 0; t < config.nav.horizon; ++t) {
            StepRow row;
            row.step = t;
            row.state = obs.to_vector();
            if (controllers.ensemble) row.policy = ensemble_predict(*controllers.ensemble, row.state);
            const PriorEstimate prior = mc_prior_estimate(controllers.prior, row.state, rng.mc);
            row.prior = prior.distribution;
            StepOutcome out = decide(config, mode, row.policy, prior, rng.action);
            row.fused = out.fused;
            row.action = out.action;
            row.floor_engaged = out.floor_engaged;
            const nav::Pose2 before = world.pose();
            row.x = before.x;
            row.y = before.y;
            row.theta = before.theta;
            nav::StepResult res = world.step(Eigen::Vector2d(out.action[0], out.action[1]));
            row.x_next = world.pose().x;
            row.y_next = world.pose().y;
            row.d_target = res.info.distance_to_goal;
            row.reward = res.reward;
            row.collision = res.info.collision;
            row.goal = res.info.goal_reached;
            log.rows.push_back(std::move(row));
            obs = res.observation;
            if (res.done) break;
        }
    } catch (const std::exception& e) {
        log.error = e.what();
    }
    return log;
}

EpisodeLog run_reacher_episode(const RunConfig& config, Mode mode, const Controllers& controllers,
                               reacher::ReacherWorld& world, int episode_index) {
    EpisodeLog log;
    log.task = Task::Reacher;
    log.mode = mode;
    log.episode = episode_index;
    log.seed = episode_seed(config.seed, static_cast<std::uint64_t>(episode_index));
    EpisodeStreams rng(log.seed);
    try {
        reacher::Observation obs = world.reset(rng.reset);
        log.out_of_distribution = !reacher::goal_in_distribution(world.goal());
        for (int t = 0; t < config.reacher.horizon; ++t) {
            StepRow row;
            row.step = t;
            row.state = obs.to_vector();
            if (controllers.ensemble) row.policy = ensemble_predict(*controllers.ensemble, row.state);
            const PriorEstimate prior = mc_prior_estimate(controllers.prior, row.state, rng.mc);
            row.prior = prior.distribution;
            StepOutcome out = decide(config, mode, row.policy, prior, rng.action);
            row.fused = out.fused;
            row.action = out.action;
            row.floor_engaged = out.floor_engaged;
            reacher::StepResult res = world.step(reacher::Vector7(out.action));
            row.reward = res.reward;
            row.collision = res.info.self_proximity;
            row.goal = res.info.goal_reached;
            row.manipulability = res.info.manipulability;
            row.error_norm = res.info.error_norm;
            log.rows.push_back(std::move(row));
            obs = res.observation;
            if (res.done || res.info.self_proximity) break;
        }
    } catch (const std::exception& e) {
        log.error = e.what();
    }
    return log;
}

EpisodeLog run_episode(const RunConfig& config, Mode mode, const Controllers& controllers, int episode_index) {
    if (config.task == Task::Nav) {
        const std::string& name = config.arenas[static_cast<size_t>(episode_index) % config.arenas.size()];
        nav::NavWorld world(nav::resolve_arena(name), config.nav);
        return run_nav_episode(config, mode, controllers, world, episode_index);
    }
    reacher::ReacherWorld world(config.reacher);
    return run_reacher_episode(config, mode, controllers, world, episode_index);
}

// --- CSV -----------------------------------------------------------------------

std::vector<std::string> csv_header(Task task, Eigen::Index state_dim, Eigen::Index action_dim) {
    std::vector<std::string> h = {"step"};
    for (Eigen::Index i = 0; i < state_dim; ++i) h.push_back("s_" + std::to_string(i));
    for (const char* p : {"mu_pi_", "sd_pi_", "mu_psi_", "sd_psi_", "mu_phi_", "sd_phi_", "a_"})
        for (Eigen::Index i = 0; i < action_dim; ++i) h.push_back(p + std::to_string(i));
    for (const char* c : {"reward", "collision", "goal", "floor_engaged"}) h.push_back(c);
    if (task == Task::Nav) {
        for (const char* c : {"x", "y", "theta", "x_next", "y_next", "d_target"}) h.push_back(c);
    } else {
        for (const char* c : {"manipulability", "error_norm"}) h.push_back(c);
    }
    return h;
}

std::string episode_to_csv(const EpisodeLog& log) {
    const Eigen::Index sd = log.task == Task::Nav ? nav::kStateDim : reacher::kStateDim;
    const Eigen::Index ad = log.task == Task::Nav ? nav::kActionDim : reacher::kActionDim;
    std::string out = "# schema_version=" + std::to_string(kLogSchemaVersion) + " task=" + to_string(log.task) +
                      " mode=" + to_string(log.mode) + " episode=" + std::to_string(log.episode) +
                      " seed=" + std::to_string(log.seed) + "\n";
    const auto header = csv_header(log.task, sd, ad);
    for (size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += '\n';
    auto put = [&out](double v) {
        out += ',';
        out += fmt(v);
    };
    auto put_dist = [&](const std::optional<ActionDistribution<double>>& d) {
        for (Eigen::Index i = 0; i < ad; ++i) put(d ? d->mean()[i] : kNaN);
        for (Eigen::Index i = 0; i < ad; ++i) put(d ? d->stddev()[i] : kNaN);
    };
    for (const StepRow& r : log.rows) {
        out += std::to_string(r.step);
        for (Eigen::Index i = 0; i < sd; ++i) put(r.state[i]);
        put_dist(r.policy);
        put_dist(r.prior);
        put_dist(r.fused);
        for (Eigen::Index i = 0; i < ad; ++i) put(r.action[i]);
        put(r.reward);
        out += r.collision ? ",1" : ",0";
        out += r.goal ? ",1" : ",0";
        out += r.floor_engaged ? ",1" : ",0";
        if (log.task == Task::Nav) {
            for (double v : {r.x, r.y, r.theta, r.x_next, r.y_next, r.d_target}) put(v);
        } else {
            put(r.manipulability);
            put(r.error_norm);
        }
        out += '\n';
    }
    return out;
}

std::vector<StepRow> rows_from_csv(const std::string& text, Task task, Eigen::Index state_dim,
                                   Eigen::Index action_dim) {
    const auto header = csv_header(task, state_dim, action_dim);
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    std::vector<StepRow> rows;
    auto fail = [&line_no](const std::string& why) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!header_seen) {
            if (cells != header) fail("unexpected header");
            header_seen = true;
            continue;
        }
        if (cells.size() != header.size())
            fail("expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
        std::vector<double> v(cells.size());
        for (size_t i = 0; i < cells.size(); ++i) {
            char* end = nullptr;
            v[i] = std::strtod(cells[i].c_str(), &end);
            if (cells[i].empty() || *end != '\0') fail("cannot parse '" + cells[i] + "' in column " + header[i]);
        }
        size_t k = 0;
        StepRow r;
        r.step = static_cast<int>(v[k++]);
        r.state.resize(state_dim);
        for (Eigen::Index i = 0; i < state_dim; ++i) r.state[i] = v[k++];
        auto take_dist = [&]() -> std::optional<ActionDistribution<double>> {
            Eigen::VectorXd mu(action_dim), sd(action_dim);
            for (Eigen::Index i = 0; i < action_dim; ++i) mu[i] = v[k++];
            for (Eigen::Index i = 0; i < action_dim; ++i) sd[i] = v[k++];
            if (mu.array().isNaN().all() && sd.array().isNaN().all()) return std::nullopt;
            try {
                return ActionDistribution<double>(mu, sd);
            } catch (const std::exception& e) {
                fail(std::string("invalid distribution: ") + e.what());
            }
            return std::nullopt;
        };
        r.policy = take_dist();
        r.prior = take_dist();
        auto fused = take_dist();
        if (!fused) fail("missing fused distribution");
        r.fused = *fused;
        r.action.resize(action_dim);
        for (Eigen::Index i = 0; i < action_dim; ++i) r.action[i] = v[k++];
        r.reward = v[k++];
        r.collision = v[k++] != 0.0;
        r.goal = v[k++] != 0.0;
        r.floor_engaged = v[k++] != 0.0;
        if (task == Task::Nav) {
            r.x = v[k++];
            r.y = v[k++];
            r.theta = v[k++];
            r.x_next = v[k++];
            r.y_next = v[k++];
            r.d_target = v[k++];
        } else {
            r.manipulability = v[k++];
            r.error_norm = v[k++];
        }
        rows.push_back(std::move(r));
    }
    if (!header_seen) throw std::runtime_error("missing header");
    return rows;
}

// --- Metrics ---------------------------------------------------------------------

EpisodeMetrics compute_metrics(const EpisodeLog& log, double dt, int horizon) {
    EpisodeMetrics m;
    m.aborted = log.error.has_value();
    m.steps = static_cast<int>(log.rows.size());
    int first_goal = -1;
    double std_sum = 0.0;
    int std_count = 0;
    double manip_sum = 0.0;
    for (size_t i = 0; i < log.rows.size(); ++i) {
        const StepRow& r = log.rows[i];
        if (r.collision) m.failure = true;
        if (r.goal && first_goal < 0) first_goal = static_cast<int>(i);
        if (log.task == Task::Nav && (first_goal < 0 || first_goal == static_cast<int>(i)))
            m.path_length += std::hypot(r.x_next - r.x, r.y_next - r.y);
        if (r.policy) {
            std_sum += r.policy->stddev().sum();
            std_count += static_cast<int>(r.policy->size());
        }
        manip_sum += r.manipulability;
    }
    m.reached = first_goal >= 0;
    m.success = m.reached && !m.failure && !m.aborted;
    m.steps_to_goal = m.reached ? log.rows[static_cast<size_t>(first_goal)].step + 1 : horizon;
    m.actuation_time = m.steps_to_goal * dt;
    m.mean_policy_std = std_count > 0 ? std_sum / std_count : kNaN;
    if (log.task == Task::Reacher && !log.rows.empty()) {
        m.mean_manipulability = manip_sum / static_cast<double>(log.rows.size());
        m.final_manipulability = log.rows.back().manipulability;
    } else if (log.task == Task::Reacher) {
        m.mean_manipulability = kNaN;
        m.final_manipulability = kNaN;
    }
    return m;
}

json metrics_to_json(const EpisodeMetrics& m, Task task) {
    json j = {{"success", m.success},
              {"failure", m.failure},
              {"aborted", m.aborted},
              {"reached", m.reached},
              {"steps", m.steps},
              {"steps_to_goal", m.steps_to_goal},
              {"actuation_time", m.actuation_time},
              {"mean_policy_std", number_or_null(m.mean_policy_std)}};
    if (task == Task::Nav) {
        j["path_length"] = m.path_length;
    } else {
        j["mean_manipulability"] = number_or_null(m.mean_manipulability);
        j["final_manipulability"] = number_or_null(m.final_manipulability);
    }
    return j;
}

AggregateMetrics aggregate(const std::vector<EpisodeMetrics>& episodes) {
    AggregateMetrics a;
    a.count = static_cast<int>(episodes.size());
    int successes = 0, failures = 0;
    std::vector<double> steps, act, path, mean_m, final_m;
    for (const auto& e : episodes) {
        if (e.aborted) {
            ++a.aborted;
            continue;
        }
        successes += e.success;
        failures += e.failure;
        steps.push_back(e.steps_to_goal);
        act.push_back(e.actuation_time);
        path.push_back(e.path_length);
        mean_m.push_back(e.mean_manipulability);
        final_m.push_back(e.final_manipulability);
    }
    if (a.count > 0) {
        a.success_rate = 100.0 * successes / a.count;
        a.failure_rate = 100.0 * failures / a.count;
    }
    a.steps_to_goal = stat_of(steps);
    a.actuation_time = stat_of(act);
    a.path_length = stat_of(path);
    a.mean_manipulability = stat_of(mean_m);
    a.final_manipulability = stat_of(final_m);
    return a;
}

json aggregate_to_json(const AggregateMetrics& a, Task task) {
    json j = {{"count", a.count},
              {"aborted", a.aborted},
              {"success_rate", a.success_rate},
              {"failure_rate", a.failure_rate},
              {"steps_to_goal", stat_json(a.steps_to_goal)},
              {"actuation_time", stat_json(a.actuation_time)}};
    if (task == Task::Nav) {
        j["path_length"] = stat_json(a.path_length);
    } else {
        j["mean_manipulability"] = stat_json(a.mean_manipulability);
        j["final_manipulability"] = stat_json(a.final_manipulability);
    }
    return j;
}

// --- Suites ------------------------------------------------------------------------

const ModeSummary& RunSummary::at(Mode mode) const {
    for (const auto& m : modes)
        if (m.mode == mode) return m;
    throw std::out_of_range(std::string("mode not in run: ") + to_string(mode));
}

json summary_to_json(const RunSummary& s) {
    const RunConfig& c = s.config;
    json j = {{"schema_version", kSummarySchemaVersion},
              {"log_schema_version", kLogSchemaVersion},
              {"task", to_string(c.task)},
              {"seed", c.seed},
              {"episodes", c.episodes},
              {"action_selection", to_string(c.selection)},
              {"state_dim", c.state_dim()},
              {"action_dim", c.action_dim()},
              {"dt", c.dt()},
              {"horizon", c.horizon()},
              {"actuation_time_unit", "control steps x dt, seconds"}};
    if (c.task == Task::Nav) {
        j["thresholds"] = {{"d_threshold", c.nav.d_threshold}};
    } else {
        j["thresholds"] = {{"e_threshold", c.reacher.e_threshold}, {"self_proximity", c.reacher.self_proximity}};
        j["manipulability_jacobian"] = to_string(c.reacher.manipulability_jacobian);
    }
    json modes = json::object();
    for (const ModeSummary& m : s.modes) {
        json episodes = json::array();
        for (size_t i = 0; i < m.logs.size(); ++i) {
            const EpisodeLog& log = m.logs[i];
            json e = {{"index", log.episode},
                      {"seed", log.seed},
                      {"split", log.out_of_distribution ? "out_of_distribution" : "in_distribution"},
                      {"file", episode_file(m.mode, log.episode)},
                      {"metrics", metrics_to_json(m.metrics[i], c.task)},
                      {"error", log.error ? json(*log.error) : json(nullptr)}};
            if (c.task == Task::Nav) e["arena"] = log.arena;
            episodes.push_back(std::move(e));
        }
        modes[to_string(m.mode)] = {
            {"aggregate", aggregate_to_json(m.all, c.task)},
            {"splits",
             {{"in_distribution", aggregate_to_json(m.in_distribution, c.task)},
              {"out_of_distribution", aggregate_to_json(m.out_of_distribution, c.task)}}},
            {"episodes", episodes}};
    }
    j["modes"] = modes;
    return j;
}

RunSummary run_suite(const RunConfig& config, bool write) {
    config.validate();
    const Controllers controllers = build_controllers(config);
    RunSummary summary;
    summary.config = config;

    fs::path out_dir(config.output_dir);
    if (write) {
        fs::create_directories(out_dir);
        for (Mode m : config.modes) fs::create_directories(out_dir / to_string(m));
        write_text(out_dir / "config.json", run_config_to_json(config).dump(2) + "\n");
        if (config.task == Task::Nav) {
            fs::create_directories(out_dir / "arenas");
            for (const auto& name : config.arenas) {
                nav::Arena arena = nav::resolve_arena(name);
                write_text(out_dir / "arenas" / (arena.name + ".json"), nav::arena_to_json(arena).dump(2) + "\n");
            }
        }
    }

    for (Mode mode : config.modes) {
        ModeSummary ms;
        ms.mode = mode;
        ms.logs.resize(static_cast<size_t>(config.episodes));
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (int i = next++; i < config.episodes; i = next++) {
                EpisodeLog log = run_episode(config, mode, controllers, i);
                if (write) write_text(out_dir / episode_file(mode, i), episode_to_csv(log));
                ms.logs[static_cast<size_t>(i)] = std::move(log);
            }
        };
        const int n_threads = std::min(config.threads, config.episodes);
        if (n_threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        std::vector<EpisodeMetrics> in, out;
        for (const EpisodeLog& log : ms.logs) {
            ms.metrics.push_back(compute_metrics(log, config.dt(), config.horizon()));
            (log.out_of_distribution ? out : in).push_back(ms.metrics.back());
        }
        ms.all = aggregate(ms.metrics);
        ms.in_distribution = aggregate(in);
        ms.out_of_distribution = aggregate(out);
        summary.modes.push_back(std::move(ms));
    }

    if (write) write_text(out_dir / "summary.json", summary_to_json(summary).dump(2) + "\n");
    return summary;
}

}  // namespace bcf
