#include <fstream>
#include <set>

#include "bcf/errors.hpp"
#include "bcf/harness.hpp"

namespace bcf {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

Eigen::VectorXd read_vector(const json& j, Eigen::Index expected, const std::string& where) {
    if (j.is_number()) return Eigen::VectorXd::Constant(expected, j.get<double>());
    if (!j.is_array()) throw ConfigError(where + " must be a number or an array");
    if (static_cast<Eigen::Index>(j.size()) != expected)
        throw ConfigError(where + " must have " + std::to_string(expected) + " entries");
    Eigen::VectorXd v(expected);
    for (Eigen::Index i = 0; i < expected; ++i) {
        if (!j[static_cast<size_t>(i)].is_number()) throw ConfigError(where + " must contain numbers");
        v[i] = j[static_cast<size_t>(i)].get<double>();
    }
    return v;
}

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

TrainingRegion::Kind region_kind_from_string(const std::string& s) {
    if (s == "everywhere") return TrainingRegion::Kind::Everywhere;
    if (s == "nav_clearance") return TrainingRegion::Kind::NavClearance;
    if (s == "reacher_goal_halfspace") return TrainingRegion::Kind::ReacherGoalHalfspace;
    throw ConfigError("unknown region kind '" + s + "'");
}

const char* to_string(TrainingRegion::Kind k) {
    switch (k) {
        case TrainingRegion::Kind::Everywhere: return "everywhere";
        case TrainingRegion::Kind::NavClearance: return "nav_clearance";
        case TrainingRegion::Kind::ReacherGoalHalfspace: return "reacher_goal_halfspace";
    }
    return "everywhere";
}

}  // namespace

Task task_from_string(const std::string& s) {
    if (s == "nav") return Task::Nav;
    if (s == "reacher") return Task::Reacher;
    throw ConfigError("unknown task '" + s + "' (expected nav | reacher)");
}

const char* to_string(Task task) { return task == Task::Nav ? "nav" : "reacher"; }

Mode mode_from_string(const std::string& s) {
    if (s == "prior_only") return Mode::PriorOnly;
    if (s == "policy_only") return Mode::PolicyOnly;
    if (s == "bcf") return Mode::Bcf;
    throw ConfigError("unknown mode '" + s + "' (expected prior_only | policy_only | bcf)");
}

const char* to_string(Mode mode) {
    switch (mode) {
        case Mode::PriorOnly: return "prior_only";
        case Mode::PolicyOnly: return "policy_only";
        case Mode::Bcf: return "bcf";
    }
    return "bcf";
}

ActionSelection selection_from_string(const std::string& s) {
    if (s == "sample") return ActionSelection::Sample;
    if (s == "mode") return ActionSelection::Mode;
    throw ConfigError("unknown action selection '" + s + "' (expected sample | mode)");
}

const char* to_string(ActionSelection selection) {
    return selection == ActionSelection::Sample ? "sample" : "mode";
}

RunConfig RunConfig::defaults(Task task) {
    RunConfig c;
    c.task = task;
    if (task == Task::Nav) {
        c.floor_std = Eigen::VectorXd::Constant(nav::kActionDim, 0.3);
        c.noise = SensorNoiseModel::nav_default();
    } else {
        c.floor_std = Eigen::VectorXd::Constant(reacher::kActionDim, 0.25 / c.reacher.qd_max);
        c.noise = SensorNoiseModel::reacher_default();
    }
    return c;
}

Eigen::Index RunConfig::state_dim() const { return task == Task::Nav ? nav::kStateDim : reacher::kStateDim; }
Eigen::Index RunConfig::action_dim() const { return task == Task::Nav ? nav::kActionDim : reacher::kActionDim; }
double RunConfig::dt() const { return task == Task::Nav ? nav.dt : reacher.dt; }
int RunConfig::horizon() const { return task == Task::Nav ? nav.horizon : reacher.horizon; }

void RunConfig::validate() const {
    if (modes.empty()) throw ConfigError("at least one mode is required");
    if (episodes < 1) throw ConfigError("episodes must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (mc_samples < 2) throw ConfigError("prior.samples must be >= 2");
    if (floor_std.size() != action_dim()) throw ConfigError("prior.floor_std has the wrong length");
    if ((floor_std.array() <= 0.0).any() || !floor_std.allFinite()) throw ConfigError("prior.floor_std must be > 0");
    noise.validate(state_dim());
    for (Mode m : modes)
        if (m != Mode::PriorOnly && !ensemble.configured())
            throw ConfigError(std::string("mode ") + to_string(m) + " requires an ensemble (weights or surrogate)");
    if (ensemble.weights_path && ensemble.surrogate)
        throw ConfigError("ensemble: give either weights or surrogate, not both");
    if (ensemble.surrogate) {
        ensemble.surrogate->validate();
        if (ensemble.surrogate->input_dim() != state_dim())
            throw ConfigError("ensemble.surrogate expert does not match the task");
    }
    if (task == Task::Nav) {
        nav.validate();
        apf.validate();
        if (arenas.empty()) throw ConfigError("nav.arenas must not be empty");
    } else {
        reacher.validate();
        rrmc.validate();
    }
}

SurrogateSpec surrogate_spec_from_json(const json& j, Task task) {
    check_keys(j, {"expert", "members", "sigma_in", "divergence_gain", "seed", "region"}, "ensemble.surrogate");
    SurrogateSpec s;
    if (task == Task::Reacher) {
        s.expert = ControllerId::RrmcManipulability;
        s.region = TrainingRegion::reacher_default();
        s.sigma_in = 0.05;
    }
    std::string expert = to_string(s.expert);
    read(j, "expert", expert, "ensemble.surrogate");
    s.expert = controller_id_from_string(expert);
    read(j, "members", s.members, "ensemble.surrogate");
    read(j, "sigma_in", s.sigma_in, "ensemble.surrogate");
    read(j, "divergence_gain", s.divergence_gain, "ensemble.surrogate");
    read(j, "seed", s.seed, "ensemble.surrogate");
    if (j.contains("region")) {
        const auto& r = j.at("region");
        check_keys(r, {"kind", "threshold", "ramp"}, "ensemble.surrogate.region");
        std::string kind = to_string(s.region.kind);
        read(r, "kind", kind, "ensemble.surrogate.region");
        s.region.kind = region_kind_from_string(kind);
        read(r, "threshold", s.region.threshold, "ensemble.surrogate.region");
        read(r, "ramp", s.region.ramp, "ensemble.surrogate.region");
    }
    s.validate();
    return s;
}

json surrogate_spec_to_json(const SurrogateSpec& s) {
    return {{"expert", to_string(s.expert)},
            {"members", s.members},
            {"sigma_in", s.sigma_in},
            {"divergence_gain", s.divergence_gain},
            {"seed", s.seed},
            {"region", {{"kind", to_string(s.region.kind)}, {"threshold", s.region.threshold}, {"ramp", s.region.ramp}}}};
}

RunConfig run_config_from_json(const json& j, Task fallback_task) {
    check_keys(j, {"task", "modes", "episodes", "seed", "action_selection", "ensemble", "prior", "nav", "reacher",
                   "threads", "output"},
               "config");
    Task task = fallback_task;
    if (j.contains("task")) {
        if (!j.at("task").is_string()) throw ConfigError("config.task must be a string");
        task = task_from_string(j.at("task").get<std::string>());
    }
    RunConfig c = RunConfig::defaults(task);

    if (j.contains("modes")) {
        const auto& m = j.at("modes");
        c.modes.clear();
        if (m.is_string() && m.get<std::string>() == "all") {
            c.modes = {Mode::PriorOnly, Mode::PolicyOnly, Mode::Bcf};
        } else if (m.is_array()) {
            for (const auto& e : m) {
                if (!e.is_string()) throw ConfigError("config.modes must contain strings");
                c.modes.push_back(mode_from_string(e.get<std::string>()));
            }
        } else {
            throw ConfigError("config.modes must be \"all\" or an array of modes");
        }
    }
    read(j, "episodes", c.episodes, "config");
    read(j, "seed", c.seed, "config");
    read(j, "threads", c.threads, "config");
    read(j, "output", c.output_dir, "config");
    if (j.contains("action_selection")) {
        std::string s;
        read(j, "action_selection", s, "config");
        c.selection = selection_from_string(s);
    }
    if (j.contains("ensemble")) {
        const auto& e = j.at("ensemble");
        check_keys(e, {"weights", "surrogate"}, "config.ensemble");
        if (e.contains("weights")) {
            std::string path;
            read(e, "weights", path, "config.ensemble");
            c.ensemble.weights_path = path;
        }
        if (e.contains("surrogate")) c.ensemble.surrogate = surrogate_spec_from_json(e.at("surrogate"), task);
    }
    if (j.contains("prior")) {
        const auto& p = j.at("prior");
        check_keys(p, {"samples", "floor_std", "noise_std", "apf", "rrmc"}, "config.prior");
        read(p, "samples", c.mc_samples, "config.prior");
        if (p.contains("floor_std")) c.floor_std = read_vector(p.at("floor_std"), c.action_dim(), "config.prior.floor_std");
        if (p.contains("noise_std")) c.noise.std = read_vector(p.at("noise_std"), c.state_dim(), "config.prior.noise_std");
        if (p.contains("apf")) {
            const auto& a = p.at("apf");
            check_keys(a, {"k_att", "k_rep", "d0", "k_omega", "max_linear", "max_angular", "slow_radius", "forward_only"},
                       "config.prior.apf");
            read(a, "k_att", c.apf.k_att, "config.prior.apf");
            read(a, "k_rep", c.apf.k_rep, "config.prior.apf");
            read(a, "d0", c.apf.d0, "config.prior.apf");
            read(a, "k_omega", c.apf.k_omega, "config.prior.apf");
            read(a, "max_linear", c.apf.max_linear, "config.prior.apf");
            read(a, "max_angular", c.apf.max_angular, "config.prior.apf");
            read(a, "slow_radius", c.apf.slow_radius, "config.prior.apf");
            read(a, "forward_only", c.apf.forward_only, "config.prior.apf");
        }
        if (p.contains("rrmc")) {
            const auto& r = p.at("rrmc");
            check_keys(r, {"gain", "damping", "qd_limit", "null_space_gain", "limit_margin", "centering_gain"}, "config.prior.rrmc");
            read(r, "gain", c.rrmc.gain, "config.prior.rrmc");
            read(r, "damping", c.rrmc.damping, "config.prior.rrmc");
            read(r, "qd_limit", c.rrmc.qd_limit, "config.prior.rrmc");
            read(r, "null_space_gain", c.rrmc.null_space_gain, "config.prior.rrmc");
            read(r, "limit_margin", c.rrmc.limit_margin, "config.prior.rrmc");
            read(r, "centering_gain", c.rrmc.centering_gain, "config.prior.rrmc");
        }
    }
    if (j.contains("nav")) {
        const auto& n = j.at("nav");
        check_keys(n, {"dt", "v_max", "w_max", "robot_radius", "d_threshold", "horizon", "lidar_rays", "max_range", "arenas"},
                   "config.nav");
        read(n, "dt", c.nav.dt, "config.nav");
        read(n, "v_max", c.nav.v_max, "config.nav");
        read(n, "w_max", c.nav.w_max, "config.nav");
        read(n, "robot_radius", c.nav.robot_radius, "config.nav");
        read(n, "d_threshold", c.nav.d_threshold, "config.nav");
        read(n, "horizon", c.nav.horizon, "config.nav");
        read(n, "lidar_rays", c.nav.lidar_rays, "config.nav");
        read(n, "max_range", c.nav.max_range, "config.nav");
        read(n, "arenas", c.arenas, "config.nav");
    }
    if (j.contains("reacher")) {
        const auto& r = j.at("reacher");
        check_keys(r, {"dt", "qd_max", "e_threshold", "horizon", "self_proximity", "start_margin", "min_goal_radius", "goal_region",
                       "manipulability_jacobian"},
                   "config.reacher");
        read(r, "dt", c.reacher.dt, "config.reacher");
        read(r, "qd_max", c.reacher.qd_max, "config.reacher");
        read(r, "e_threshold", c.reacher.e_threshold, "config.reacher");
        read(r, "horizon", c.reacher.horizon, "config.reacher");
        read(r, "self_proximity", c.reacher.self_proximity, "config.reacher");
        read(r, "start_margin", c.reacher.start_margin, "config.reacher");
        read(r, "min_goal_radius", c.reacher.min_goal_radius, "config.reacher");
        if (r.contains("goal_region")) {
            std::string g;
            read(r, "goal_region", g, "config.reacher");
            c.reacher.goal_region = reacher::goal_region_from_string(g);
        }
        if (r.contains("manipulability_jacobian")) {
            std::string mj;
            read(r, "manipulability_jacobian", mj, "config.reacher");
            if (mj == "6x7") c.reacher.manipulability_jacobian = ManipulabilityJacobian::Full6x7;
            else if (mj == "3x7") c.reacher.manipulability_jacobian = ManipulabilityJacobian::Translational3x7;
            else throw ConfigError("config.reacher.manipulability_jacobian must be 6x7 or 3x7");
        }
    }
    return c;
}

json run_config_to_json(const RunConfig& c) {
    json modes = json::array();
    for (Mode m : c.modes) modes.push_back(to_string(m));
    json ensemble = json::object();
    if (c.ensemble.weights_path) ensemble["weights"] = *c.ensemble.weights_path;
    if (c.ensemble.surrogate) ensemble["surrogate"] = surrogate_spec_to_json(*c.ensemble.surrogate);
    json j = {
        {"task", to_string(c.task)},
        {"modes", modes},
        {"episodes", c.episodes},
        {"seed", c.seed},
        {"action_selection", to_string(c.selection)},
        {"ensemble", ensemble},
        {"prior",
         {{"samples", c.mc_samples},
          {"floor_std", vector_json(c.floor_std)},
          {"noise_std", vector_json(c.noise.std)},
          {"apf",
           {{"k_att", c.apf.k_att},
            {"k_rep", c.apf.k_rep},
            {"d0", c.apf.d0},
            {"k_omega", c.apf.k_omega},
            {"max_linear", c.apf.max_linear},
            {"max_angular", c.apf.max_angular},
            {"slow_radius", c.apf.slow_radius},
            {"forward_only", c.apf.forward_only}}},
          {"rrmc",
           {{"gain", c.rrmc.gain},
            {"damping", c.rrmc.damping},
            {"qd_limit", c.rrmc.qd_limit},
            {"null_space_gain", c.rrmc.null_space_gain},
            {"limit_margin", c.rrmc.limit_margin},
            {"centering_gain", c.rrmc.centering_gain}}}}},
        {"threads", c.threads},
        {"output", c.output_dir},
    };
    if (c.task == Task::Nav) {
        j["nav"] = {{"dt", c.nav.dt},
                    {"v_max", c.nav.v_max},
                    {"w_max", c.nav.w_max},
                    {"robot_radius", c.nav.robot_radius},
                    {"d_threshold", c.nav.d_threshold},
                    {"horizon", c.nav.horizon},
                    {"lidar_rays", c.nav.lidar_rays},
                    {"max_range", c.nav.max_range},
                    {"arenas", c.arenas}};
    } else {
        j["reacher"] = {{"dt", c.reacher.dt},
                        {"qd_max", c.reacher.qd_max},
                        {"e_threshold", c.reacher.e_threshold},
                        {"horizon", c.reacher.horizon},
                        {"self_proximity", c.reacher.self_proximity},
                        {"start_margin", c.reacher.start_margin},
                        {"min_goal_radius", c.reacher.min_goal_radius},
                        {"goal_region", reacher::to_string(c.reacher.goal_region)},
                        {"manipulability_jacobian", to_string(c.reacher.manipulability_jacobian)}};
    }
    return j;
}

RunConfig load_run_config(const std::string& path, Task fallback_task) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j, fallback_task);
}

Controllers build_controllers(const RunConfig& config) {
    config.validate();
    Controllers c;
    if (config.ensemble.weights_path) {
        c.ensemble = load_ensemble(*config.ensemble.weights_path);
    } else if (config.ensemble.surrogate) {
        c.ensemble = build_surrogate_ensemble(*config.ensemble.surrogate);
    }
    if (c.ensemble && (c.ensemble->input_dim() != config.state_dim() || c.ensemble->action_dim() != config.action_dim()))
        throw ConfigError("ensemble widths do not match the task (" + std::to_string(c.ensemble->input_dim()) + " -> " +
                          std::to_string(c.ensemble->action_dim()) + ")");
    c.prior.controller =
        config.task == Task::Nav ? make_apf_controller(config.apf) : make_rrmc_controller(config.rrmc);
    c.prior.noise = config.noise;
    c.prior.samples = config.mc_samples;
    c.prior.floor_std = config.floor_std;
    c.prior.validate();
    return c;
}

}  // namespace bcf
