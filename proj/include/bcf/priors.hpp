#pragma once

// Classical controllers and the Monte-Carlo wrapper that turns any
// deterministic controller into a per-dimension Gaussian action distribution.

#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "bcf/fusion.hpp"
#include "bcf/kinematics.hpp"
#include "bcf/nav_env.hpp"
#include "bcf/reacher_env.hpp"

namespace bcf {

/// A deterministic state -> action map in normalised action units.
using Controller = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// --- Artificial potential fields -------------------------------------------

struct ApfParams {
    double k_att = 1.0;          // attractive gain
    double k_rep = 0.6;          // repulsive gain
    double d0 = 1.2;             // repulsion cutoff, m
    double k_omega = 2.5;        // heading gain, 1/rad
    double max_linear = 1.0;     // normalised
    double max_angular = 1.0;    // normalised
    double slow_radius = 0.3;    // attractive force tapers linearly inside this radius, m
    bool forward_only = true;    // clamp the linear command at zero

    void validate() const;

    /// Tuned so the prior oscillates between nearby obstacles.
    static ApfParams oscillatory() { return {}; }
    /// A calmer tuning used as the surrogate policies' expert.
    static ApfParams smooth() { return {1.0, 0.04, 0.6, 1.5, 1.0, 1.0, 0.3, true}; }
};

/// Net potential-field force in the robot frame (x forward, y left).
Eigen::Vector2d apf_force(const nav::Observation& obs, const ApfParams& params);

/// (linear, angular) command in [-1, 1]^2.
Eigen::Vector2d apf_action(const nav::Observation& obs, const ApfParams& params);

// --- Resolved-rate motion control ------------------------------------------

struct RrmcParams {
    double gain = 1.5;             // end-effector velocity gain lambda, 1/s
    double damping = 1e-2;         // damped least squares mu
    double qd_limit = 1.74;        // rad/s; also the action normalisation
    double null_space_gain = 0.0;  // > 0 adds manipulability ascent in the null space
    double limit_margin = 0.1;     // rad; joints this close to a limit and driven outward are locked
    double centering_gain = 5.0;   // null-space pull towards the middle of each joint range, 1/s

    void validate() const;
};

/// Unclamped joint velocity (rad/s): J_v^+ (lambda * e_t), plus the optional
/// null-space manipulability ascent. Joints at a limit that the solution would
/// drive further out are locked and the remaining joints re-solved.
reacher::Vector7 rrmc_joint_velocity(const reacher::Observation& obs, const RrmcParams& params,
                                     const ArmModel<double>& model);

/// Joint velocity scaled uniformly to respect qd_limit, expressed in
/// normalised action units (divided by qd_limit).
reacher::Vector7 rrmc_action(const reacher::Observation& obs, const RrmcParams& params,
                             const ArmModel<double>& model);

/// Central-difference gradient of the manipulability index w.r.t. q.
reacher::Vector7 manipulability_gradient(const ArmModel<double>& model, const reacher::Vector7& q,
                                         ManipulabilityJacobian which = ManipulabilityJacobian::Full6x7);

// --- Controller registry ----------------------------------------------------

enum class ControllerId { Apf, ApfSmooth, Rrmc, RrmcManipulability };

ControllerId controller_id_from_string(const std::string& s);
const char* to_string(ControllerId id);

Controller make_apf_controller(const ApfParams& params);
Controller make_rrmc_controller(const RrmcParams& params, ArmModel<double> model = ArmModel<double>::panda());

/// Built-in controller by id with its default parameters.
Controller make_controller(ControllerId id);

// --- Monte-Carlo control prior ----------------------------------------------

struct SensorNoiseModel {
    Eigen::VectorXd std;  // per state dimension, in the feature's own units

    void validate(Eigen::Index state_dim) const;

    /// Defaults: lidar 0.05 m, goal error 0.02 m, previous action unperturbed.
    static SensorNoiseModel nav_default();
    /// Defaults: q 0.01 rad, qdot unperturbed, goal error and ee position 0.005 m.
    static SensorNoiseModel reacher_default();
};

struct ControlPriorWrapper {
    Controller controller;
    SensorNoiseModel noise;
    int samples = 50;             // N >= 2
    Eigen::VectorXd floor_std;    // sigma_d per action dimension, > 0

    void validate() const;
};

struct PriorEstimate {
    ActionDistribution<double> distribution;
    Eigen::VectorXd raw_std;           // empirical std before the floor
    Eigen::Array<bool, Eigen::Dynamic, 1> floor_engaged;
};

/// Propagates s_k ~ N(s, diag(noise^2)), k = 1..N, through the controller.
/// mean = N^-1 sum a(s_k); var = max(N^-1 sum (a(s_k) - mean)^2, floor^2).
PriorEstimate mc_prior_estimate(const ControlPriorWrapper& wrapper, const Eigen::VectorXd& state,
                                std::mt19937_64& rng);

ActionDistribution<double> mc_prior_distribution(const ControlPriorWrapper& wrapper, const Eigen::VectorXd& state,
                                                 std::mt19937_64& rng);

}  // namespace bcf
