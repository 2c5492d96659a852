#include "bcf/reacher_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bcf/errors.hpp"

namespace bcf::reacher {

namespace {

Vector7 random_configuration(std::mt19937_64& rng, const ArmModel<double>& model, double margin = 0.0) {
    std::uniform_real_distribution<double> unit(margin, 1.0 - margin);
    Vector7 q;
    for (int i = 0; i < kArmDof; ++i) q[i] = model.lower[i] + unit(rng) * (model.upper[i] - model.lower[i]);
    return q;
}

bool region_accepts(GoalRegion region, const Eigen::Vector3d& goal) {
    switch (region) {
        case GoalRegion::InDistribution: return goal_in_distribution(goal);
        case GoalRegion::OutOfDistribution: return !goal_in_distribution(goal);
        case GoalRegion::Any: return true;
    }
    return true;
}

}  // namespace

Eigen::VectorXd Observation::to_vector() const {
    Eigen::VectorXd s(kStateDim);
    s << q, qd, goal_error, ee_position;
    return s;
}

Observation Observation::from_vector(const Eigen::VectorXd& s) {
    BCF_REQUIRE(s.size() == kStateDim, "reacher observation must have width 20, got " + std::to_string(s.size()));
    Observation o;
    o.q = s.head<7>();
    o.qd = s.segment<7>(7);
    o.goal_error = s.segment<3>(14);
    o.ee_position = s.segment<3>(17);
    return o;
}

GoalRegion goal_region_from_string(const std::string& s) {
    if (s == "in" || s == "in_distribution") return GoalRegion::InDistribution;
    if (s == "out" || s == "out_of_distribution") return GoalRegion::OutOfDistribution;
    if (s == "any") return GoalRegion::Any;
    throw ConfigError("unknown goal region '" + s + "' (expected in | out | any)");
}

const char* to_string(GoalRegion region) {
    switch (region) {
        case GoalRegion::InDistribution: return "in";
        case GoalRegion::OutOfDistribution: return "out";
        case GoalRegion::Any: return "any";
    }
    return "any";
}

void ReacherConfig::validate() const {
    if (!(dt > 0 && qd_max > 0 && e_threshold > 0 && self_proximity >= 0))
        throw ConfigError("reacher config: dt, qd_max, e_threshold must be positive");
    if (horizon < 1) throw ConfigError("reacher config: horizon must be >= 1");
    if (!(start_margin >= 0.0 && start_margin < 0.5)) throw ConfigError("reacher config: start_margin must be in [0, 0.5)");
}

double min_link_separation(const ArmModel<double>& model, const Vector7& q) {
    const auto frames = joint_frames(model, q);
    // Frames 2 and 6 share their origins with frames 1 and 5.
    const std::array<Eigen::Vector3d, 7> points = {
        Eigen::Vector3d::Zero(),  frames[0].translation(), frames[2].translation(), frames[3].translation(),
        frames[4].translation(), frames[6].translation(), frames[7].translation(),
    };
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < points.size(); ++i)
        for (size_t j = i + 2; j < points.size(); ++j) best = std::min(best, (points[i] - points[j]).norm());
    return best;
}

ReacherWorld::ReacherWorld(ReacherConfig config, ArmModel<double> model)
    : config_(config), model_(std::move(model)) {
    config_.validate();
}

Observation ReacherWorld::reset(std::mt19937_64& rng) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const Vector7 q = random_configuration(rng, model_, config_.start_margin);
        if (min_link_separation(model_, q) < config_.self_proximity) continue;
        const Eigen::Vector3d start = forward_kinematics(model_, q).translation();
        if (start.z() < config_.min_goal_height) continue;
        for (int g = 0; g < 100; ++g) {
            const Eigen::Vector3d goal = forward_kinematics(model_, random_configuration(rng, model_)).translation();
            if (goal.z() < config_.min_goal_height || !region_accepts(config_.goal_region, goal)) continue;
            if (goal.head<2>().norm() < config_.min_goal_radius) continue;
            if ((goal - start).norm() < config_.min_goal_distance) continue;
            return reset_to(q, goal);
        }
    }
    throw ConfigError("reacher reset: could not sample a valid start/goal pair");
}

Observation ReacherWorld::reset_to(const Vector7& q, const Eigen::Vector3d& goal) {
    BCF_REQUIRE(q.allFinite() && goal.allFinite(), "reacher reset: q and goal must be finite");
    q_ = model_.clamp(q);
    qd_.setZero();
    goal_ = goal;
    steps_ = 0;
    done_ = false;
    started_ = true;
    return observe();
}

Observation ReacherWorld::observe() const {
    Observation o;
    o.q = q_;
    o.qd = qd_;
    o.ee_position = forward_kinematics(model_, q_).translation();
    o.goal_error = goal_ - o.ee_position;
    return o;
}

double ReacherWorld::manipulability_now() const {
    return manipulability(model_, q_, config_.manipulability_jacobian);
}

StepResult ReacherWorld::step(const Vector7& action) {
    BCF_REQUIRE(started_, "reacher step: world has not been reset");
    BCF_REQUIRE(!done_, "reacher step: episode is already done");
    BCF_REQUIRE(action.allFinite(), "reacher step: action must be finite");
    const Vector7 qd_cmd = action.cwiseMax(-1.0).cwiseMin(1.0) * config_.qd_max;
    const Vector7 unclamped = q_ + qd_cmd * config_.dt;
    q_ = model_.clamp(unclamped);
    // Joints stopped by a limit report zero velocity.
    for (int i = 0; i < kArmDof; ++i) qd_[i] = (q_[i] == unclamped[i]) ? qd_cmd[i] : 0.0;
    ++steps_;

    StepResult r;
    r.observation = observe();
    r.info.error_norm = r.observation.goal_error.norm();
    r.info.manipulability = manipulability_now();
    r.info.goal_reached = r.info.error_norm < config_.e_threshold;
    r.info.self_proximity = min_link_separation(model_, q_) < config_.self_proximity;
    r.reward = r.info.goal_reached ? 1.0 : r.info.manipulability;
    r.done = steps_ >= config_.horizon;
    done_ = r.done;
    return r;
}

Eigen::VectorXd sample_observation(std::mt19937_64& rng, GoalRegion region, const ArmModel<double>& model) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Observation o;
    o.q = random_configuration(rng, model);
    for (int i = 0; i < kArmDof; ++i) o.qd[i] = (2 * unit(rng) - 1) * 1.74;
    o.ee_position = forward_kinematics(model, o.q).translation();
    Eigen::Vector3d goal;
    do {
        goal = forward_kinematics(model, random_configuration(rng, model)).translation();
    } while (!region_accepts(region, goal));
    o.goal_error = goal - o.ee_position;
    return o.to_vector();
}

}  // namespace bcf::reacher
