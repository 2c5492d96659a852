#pragma once

// Kinematic 7-DoF reaching task. Actions are joint velocities normalised to
// [-1, 1]; the reward is 1 inside the goal threshold and the manipulability
// index of the current configuration otherwise. Episodes last 1000 steps.

#include <random>
#include <string>

#include <Eigen/Dense>

#include "bcf/kinematics.hpp"

namespace bcf::reacher {

constexpr int kStateDim = 20;
constexpr int kActionDim = kArmDof;

using Vector7 = Joint7<double>;

/// Layout of the 20-wide observation: [q(7), qdot(7), goal error(3), ee position(3)].
/// The goal error is goal - ee position in the base frame.
struct Observation {
    Vector7 q = Vector7::Zero();
    Vector7 qd = Vector7::Zero();
    Eigen::Vector3d goal_error = Eigen::Vector3d::Zero();
    Eigen::Vector3d ee_position = Eigen::Vector3d::Zero();

    Eigen::VectorXd to_vector() const;
    static Observation from_vector(const Eigen::VectorXd& s);

    Eigen::Vector3d goal() const { return ee_position + goal_error; }
};

enum class GoalRegion { InDistribution, OutOfDistribution, Any };

GoalRegion goal_region_from_string(const std::string& s);
const char* to_string(GoalRegion region);

/// In-distribution goals lie in the positive-x half of the workspace.
inline bool goal_in_distribution(const Eigen::Vector3d& goal) { return goal.x() > 0.0; }

struct ReacherConfig {
    double dt = 0.01;               // s
    double qd_max = 1.74;           // rad/s
    double e_threshold = 0.05;      // m
    int horizon = 1000;
    double self_proximity = 0.08;   // m
    double min_goal_height = 0.05;  // m
    double min_goal_distance = 0.1; // m, from the start ee position
    double min_goal_radius = 0.3;   // m, horizontal distance of the goal from the base axis
    double start_margin = 0.2;      // fraction of each joint range excluded at both ends for start poses
    GoalRegion goal_region = GoalRegion::InDistribution;
    ManipulabilityJacobian manipulability_jacobian = ManipulabilityJacobian::Full6x7;

    void validate() const;
};

/// Smallest distance between two non-adjacent link points of the arm.
/// Link points are the distinct frame origins along the chain:
/// base, shoulder, upper arm, elbow, wrist, hand, flange.
double min_link_separation(const ArmModel<double>& model, const Vector7& q);

struct StepInfo {
    double manipulability = 0.0;
    double error_norm = 0.0;
    bool goal_reached = false;
    bool self_proximity = false;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

class ReacherWorld {
public:
    explicit ReacherWorld(ReacherConfig config = {}, ArmModel<double> model = ArmModel<double>::panda());

    Observation reset(std::mt19937_64& rng);
    Observation reset_to(const Vector7& q, const Eigen::Vector3d& goal);

    StepResult step(const Vector7& action);

    Observation observe() const;
    double manipulability_now() const;

    const ReacherConfig& config() const { return config_; }
    const ArmModel<double>& model() const { return model_; }
    const Vector7& q() const { return q_; }
    const Vector7& qd() const { return qd_; }
    const Eigen::Vector3d& goal() const { return goal_; }
    int step_count() const { return steps_; }
    bool done() const { return done_; }

private:
    ReacherConfig config_;
    ArmModel<double> model_;
    Vector7 q_ = Vector7::Zero();
    Vector7 qd_ = Vector7::Zero();
    Eigen::Vector3d goal_ = Eigen::Vector3d::Zero();
    int steps_ = 0;
    bool done_ = false;
    bool started_ = false;
};

/// Random observation: q within limits, qdot within qd_max, goal from the FK of
/// another random configuration restricted to `region`.
Eigen::VectorXd sample_observation(std::mt19937_64& rng, GoalRegion region = GoalRegion::Any,
                                   const ArmModel<double>& model = ArmModel<double>::panda());

}  // namespace bcf::reacher
