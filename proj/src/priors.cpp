#include "bcf/priors.hpp"

#include <algorithm>
#include <cmath>

#include "bcf/errors.hpp"

namespace bcf {

void ApfParams::validate() const {
    if (!(k_att > 0 && k_rep > 0 && d0 > 0 && k_omega > 0 && max_linear > 0 && max_angular > 0 && slow_radius > 0))
        throw ConfigError("apf params: gains, d0, limits and slow_radius must be positive");
}

Eigen::Vector2d apf_force(const nav::Observation& obs, const ApfParams& params) {
    const Eigen::Vector2d& e = obs.goal_error;
    const double dist = e.norm();
    Eigen::Vector2d force = Eigen::Vector2d::Zero();
    if (dist > 0.0) force = params.k_att * e / std::max(dist, params.slow_radius);
    for (int i = 0; i < nav::kLidarBins; ++i) {
        const double r = std::max(obs.lidar[i], 1e-3);
        if (r >= params.d0) continue;
        const double angle = nav::bin_center_angle(i);
        const double magnitude = params.k_rep * (1.0 / r - 1.0 / params.d0) / (r * r);
        force -= magnitude * Eigen::Vector2d(std::cos(angle), std::sin(angle));
    }
    return force;
}

Eigen::Vector2d apf_action(const nav::Observation& obs, const ApfParams& params) {
    if (obs.goal_error.norm() == 0.0) return Eigen::Vector2d::Zero();
    const Eigen::Vector2d f = apf_force(obs, params);
    double linear = std::clamp(f.x(), -params.max_linear, params.max_linear);
    if (params.forward_only) linear = std::max(linear, 0.0);
    const double heading_error = (f.x() == 0.0 && f.y() == 0.0) ? 0.0 : std::atan2(f.y(), f.x());
    const double angular = std::clamp(params.k_omega * heading_error, -params.max_angular, params.max_angular);
    return {linear, angular};
}

void RrmcParams::validate() const {
    if (!(gain > 0)) throw ConfigError("rrmc params: gain must be > 0");
    if (!(damping >= 0)) throw ConfigError("rrmc params: damping must be >= 0");
    if (!(qd_limit > 0)) throw ConfigError("rrmc params: qd_limit must be > 0");
    if (!(null_space_gain >= 0)) throw ConfigError("rrmc params: null_space_gain must be >= 0");
    if (!(limit_margin >= 0)) throw ConfigError("rrmc params: limit_margin must be >= 0");
    if (!(centering_gain >= 0)) throw ConfigError("rrmc params: centering_gain must be >= 0");
}

reacher::Vector7 manipulability_gradient(const ArmModel<double>& model, const reacher::Vector7& q,
                                         ManipulabilityJacobian which) {
    constexpr double h = 1e-6;
    reacher::Vector7 grad;
    for (int i = 0; i < kArmDof; ++i) {
        reacher::Vector7 hi = q, lo = q;
        hi[i] += h;
        lo[i] -= h;
        grad[i] = (manipulability(model, hi, which) - manipulability(model, lo, which)) / (2 * h);
    }
    return grad;
}

reacher::Vector7 rrmc_joint_velocity(const reacher::Observation& obs, const RrmcParams& params,
                                     const ArmModel<double>& model) {
    if (obs.goal_error.isZero(0.0)) return reacher::Vector7::Zero();
    const Jacobian3x7<double> jv_full = jacobian(model, obs.q).topRows<3>();
    const reacher::Vector7 mid = 0.5 * (model.lower + model.upper);
    const reacher::Vector7 half = 0.5 * (model.upper - model.lower);
    reacher::Vector7 secondary = -params.centering_gain * (obs.q - mid).cwiseQuotient(half);
    if (params.null_space_gain > 0.0) secondary += params.null_space_gain * manipulability_gradient(model, obs.q);
    Eigen::Array<bool, 7, 1> locked = Eigen::Array<bool, 7, 1>::Constant(false);
    reacher::Vector7 qd = reacher::Vector7::Zero();
    for (int pass = 0; pass <= kArmDof; ++pass) {
        Jacobian3x7<double> jv = jv_full;
        for (int i = 0; i < kArmDof; ++i)
            if (locked[i]) jv.col(i).setZero();
        const Eigen::Matrix<double, 7, 3> pinv = damped_pseudoinverse(jv, params.damping);
        qd = pinv * (params.gain * obs.goal_error);
        if (!secondary.isZero(0.0)) {
            const Eigen::Matrix<double, 7, 3> exact = jv.completeOrthogonalDecomposition().pseudoInverse();
            Eigen::Matrix<double, 7, 7> null_proj = Eigen::Matrix<double, 7, 7>::Identity() - exact * jv;
            for (int i = 0; i < kArmDof; ++i)
                if (locked[i]) null_proj.row(i).setZero();
            qd += null_proj * secondary;
        }
        bool changed = false;
        for (int i = 0; i < kArmDof; ++i) {
            if (locked[i]) continue;
            const bool at_low = obs.q[i] <= model.lower[i] + params.limit_margin && qd[i] < 0.0;
            const bool at_high = obs.q[i] >= model.upper[i] - params.limit_margin && qd[i] > 0.0;
            if (at_low || at_high) locked[i] = changed = true;
        }
        if (!changed) break;
    }
    for (int i = 0; i < kArmDof; ++i)
        if (locked[i]) qd[i] = 0.0;
    return qd;
}

reacher::Vector7 rrmc_action(const reacher::Observation& obs, const RrmcParams& params,
                             const ArmModel<double>& model) {
    reacher::Vector7 qd = rrmc_joint_velocity(obs, params, model);
    const double peak = qd.cwiseAbs().maxCoeff();
    if (peak > params.qd_limit) qd *= params.qd_limit / peak;
    return qd / params.qd_limit;
}

ControllerId controller_id_from_string(const std::string& s) {
    if (s == "apf") return ControllerId::Apf;
    if (s == "apf_smooth") return ControllerId::ApfSmooth;
    if (s == "rrmc") return ControllerId::Rrmc;
    if (s == "rrmc_manipulability") return ControllerId::RrmcManipulability;
    throw ConfigError("unknown controller id '" + s + "' (expected apf | apf_smooth | rrmc | rrmc_manipulability)");
}

const char* to_string(ControllerId id) {
    switch (id) {
        case ControllerId::Apf: return "apf";
        case ControllerId::ApfSmooth: return "apf_smooth";
        case ControllerId::Rrmc: return "rrmc";
        case ControllerId::RrmcManipulability: return "rrmc_manipulability";
    }
    return "apf";
}

Controller make_apf_controller(const ApfParams& params) {
    params.validate();
    return [params](const Eigen::VectorXd& s) -> Eigen::VectorXd {
        return apf_action(nav::Observation::from_vector(s), params);
    };
}

Controller make_rrmc_controller(const RrmcParams& params, ArmModel<double> model) {
    params.validate();
    return [params, model = std::move(model)](const Eigen::VectorXd& s) -> Eigen::VectorXd {
        return rrmc_action(reacher::Observation::from_vector(s), params, model);
    };
}

Controller make_controller(ControllerId id) {
    switch (id) {
        case ControllerId::Apf: return make_apf_controller(ApfParams::oscillatory());
        case ControllerId::ApfSmooth: return make_apf_controller(ApfParams::smooth());
        case ControllerId::Rrmc: return make_rrmc_controller(RrmcParams{});
        case ControllerId::RrmcManipulability: {
            RrmcParams p;
            p.null_space_gain = 4.0;
            return make_rrmc_controller(p);
        }
    }
    throw ConfigError("unknown controller id");
}

void SensorNoiseModel::validate(Eigen::Index state_dim) const {
    if (std.size() != state_dim)
        throw ConfigError("sensor noise model has " + std::to_string(std.size()) + " entries, state has " +
                          std::to_string(state_dim));
    if (!std.allFinite() || (std.array() < 0.0).any())
        throw ConfigError("sensor noise stds must be finite and >= 0");
}

SensorNoiseModel SensorNoiseModel::nav_default() {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(nav::kStateDim);
    s.head<nav::kLidarBins>().setConstant(0.05);
    s.segment<2>(nav::kLidarBins).setConstant(0.02);
    return {s};
}

SensorNoiseModel SensorNoiseModel::reacher_default() {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(reacher::kStateDim);
    s.head<7>().setConstant(0.01);
    s.tail<6>().setConstant(0.005);
    return {s};
}

void ControlPriorWrapper::validate() const {
    if (!controller) throw ConfigError("control prior: no controller");
    if (samples < 2) throw ConfigError("control prior: need at least 2 Monte-Carlo samples");
    if (floor_std.size() < 1 || !floor_std.allFinite() || (floor_std.array() <= 0.0).any())
        throw ConfigError("control prior: floor std must be finite and > 0 in every dimension");
}

PriorEstimate mc_prior_estimate(const ControlPriorWrapper& wrapper, const Eigen::VectorXd& state,
                                std::mt19937_64& rng) {
    BCF_REQUIRE(wrapper.samples >= 2, "mc prior: need at least 2 samples");
    BCF_REQUIRE(wrapper.noise.std.size() == state.size(), "mc prior: noise model width does not match the state");
    std::normal_distribution<double> unit(0.0, 1.0);
    const Eigen::Index n = wrapper.floor_std.size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd perturbed(state.size());
    for (int k = 0; k < wrapper.samples; ++k) {
        for (Eigen::Index i = 0; i < state.size(); ++i)
            perturbed[i] = wrapper.noise.std[i] > 0.0 ? state[i] + wrapper.noise.std[i] * unit(rng) : state[i];
        Eigen::VectorXd a;
        try {
            a = wrapper.controller(perturbed);
        } catch (const std::exception& e) {
            throw ControllerError("control prior sample " + std::to_string(k) + ": " + e.what());
        }
        BCF_REQUIRE(a.size() == n, "mc prior: controller output width does not match the floor std");
        // Welford keeps the mean exact when every sample is identical.
        const Eigen::VectorXd delta = a - mean;
        mean += delta / static_cast<double>(k + 1);
        m2 += delta.cwiseProduct(a - mean);
    }
    const Eigen::VectorXd raw_var = m2 / static_cast<double>(wrapper.samples);
    const Eigen::VectorXd floor_var = wrapper.floor_std.array().square().matrix();
    PriorEstimate out{ActionDistribution<double>::from_variance(mean, raw_var.cwiseMax(floor_var)),
                      raw_var.cwiseSqrt(), raw_var.array() < floor_var.array()};
    return out;
}

ActionDistribution<double> mc_prior_distribution(const ControlPriorWrapper& wrapper, const Eigen::VectorXd& state,
                                                 std::mt19937_64& rng) {
    return mc_prior_estimate(wrapper, state, rng).distribution;
}

}  // namespace bcf
