#include <cmath>
#include <random>

#include <doctest.h>

#include "bcf/priors.hpp"

using namespace bcf;
using Eigen::VectorXd;

namespace {

nav::Observation open_obs(double gx, double gy) {
    nav::Observation o;
    o.lidar.setConstant(5.0);
    o.goal_error = {gx, gy};
    return o;
}

reacher::Observation reacher_obs(const reacher::Vector7& q, const Eigen::Vector3d& goal) {
    const auto model = ArmModel<double>::panda();
    reacher::Observation o;
    o.q = q;
    o.ee_position = forward_kinematics(model, q).translation();
    o.goal_error = goal - o.ee_position;
    return o;
}

reacher::Vector7 random_q(std::mt19937_64& rng, double margin = 0.2) {
    const auto m = ArmModel<double>::panda();
    reacher::Vector7 q;
    for (int i = 0; i < 7; ++i) {
        const double span = m.upper[i] - m.lower[i];
        q[i] = std::uniform_real_distribution<double>(m.lower[i] + margin * span, m.upper[i] - margin * span)(rng);
    }
    return q;
}

}  // namespace

TEST_CASE("apf: no goal error gives no command") {
    CHECK(apf_action(open_obs(0.0, 0.0), ApfParams::oscillatory()) == Eigen::Vector2d::Zero());
    CHECK(apf_action(open_obs(0.0, 0.0), ApfParams::smooth()) == Eigen::Vector2d::Zero());
}

TEST_CASE("apf: free space drives straight at a goal ahead and turns towards a goal aside") {
    const ApfParams p;
    const auto ahead = apf_action(open_obs(3.0, 0.0), p);
    CHECK(ahead[0] == doctest::Approx(1.0));
    CHECK(ahead[1] == doctest::Approx(0.0));
    CHECK(apf_action(open_obs(0.5, 1.0), p)[1] > 0.0);
    CHECK(apf_action(open_obs(0.5, -1.0), p)[1] < 0.0);
    const auto behind = apf_action(open_obs(-2.0, 0.1), p);
    CHECK(behind[0] == 0.0);
    CHECK(std::abs(behind[1]) == doctest::Approx(1.0));
}

TEST_CASE("apf: an obstacle ahead slows the robot and the output stays bounded") {
    const ApfParams p;
    auto o = open_obs(3.0, 0.0);
    const double free_linear = apf_action(o, p)[0];
    o.lidar[7] = 0.5;
    CHECK(apf_action(o, p)[0] < free_linear);

    std::mt19937_64 rng(1);
    for (int i = 0; i < 2000; ++i) {
        const auto s = nav::sample_observation(rng);
        for (const auto& params : {ApfParams::oscillatory(), ApfParams::smooth()}) {
            const auto a = apf_action(nav::Observation::from_vector(s), params);
            CHECK((a.array().abs() <= 1.0).all());
            CHECK(a[0] >= 0.0);
        }
    }
}

TEST_CASE("apf: reverse allowed when forward_only is off") {
    ApfParams p;
    p.forward_only = false;
    auto o = open_obs(0.3, 0.0);
    o.lidar[7] = 0.1;
    CHECK(apf_action(o, p)[0] < 0.0);
}

TEST_CASE("rrmc: zero goal error gives zero action") {
    const auto model = ArmModel<double>::panda();
    const auto q = ArmModel<double>::ready_pose();
    const auto o = reacher_obs(q, forward_kinematics(model, q).translation());
    CHECK(rrmc_action(o, RrmcParams{}, model).isZero(0.0));
}

TEST_CASE("rrmc: a small step reduces the goal error and respects qd_limit") {
    const auto model = ArmModel<double>::panda();
    std::mt19937_64 rng(2);
    const RrmcParams params;
    int reduced = 0;
    for (int i = 0; i < 100; ++i) {
        const auto q = random_q(rng);
        const Eigen::Vector3d goal = forward_kinematics(model, random_q(rng)).translation();
        const auto o = reacher_obs(q, goal);
        const auto a = rrmc_action(o, params, model);
        CHECK(a.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
        const reacher::Vector7 q_next = q + a * params.qd_limit * 1e-3;
        const double before = o.goal_error.norm();
        const double after = (goal - forward_kinematics(model, q_next).translation()).norm();
        if (after < before) ++reduced;
    }
    CHECK(reduced == 100);
}

TEST_CASE("rrmc: joints at a limit are not pushed further out") {
    const auto model = ArmModel<double>::panda();
    std::mt19937_64 rng(3);
    const RrmcParams params;
    for (int i = 0; i < 200; ++i) {
        auto q = random_q(rng, 0.0);
        const int j = static_cast<int>(rng() % 7);
        const bool high = rng() % 2;
        q[j] = high ? model.upper[j] : model.lower[j];
        const Eigen::Vector3d goal = forward_kinematics(model, random_q(rng)).translation();
        const auto qd = rrmc_joint_velocity(reacher_obs(q, goal), params, model);
        if (high)
            CHECK(qd[j] <= 0.0);
        else
            CHECK(qd[j] >= 0.0);
    }
}

TEST_CASE("manipulability gradient matches finite differences of the index") {
    const auto model = ArmModel<double>::panda();
    const auto q = ArmModel<double>::ready_pose();
    const auto g = manipulability_gradient(model, q);
    for (int i = 0; i < 7; ++i) {
        auto hi = q, lo = q;
        hi[i] += 1e-4;
        lo[i] -= 1e-4;
        CHECK(g[i] == doctest::Approx((manipulability(model, hi) - manipulability(model, lo)) / 2e-4).epsilon(1e-4));
    }
}

TEST_CASE("mc prior: noiseless sensing is exact and hits the floor") {
    ControlPriorWrapper w;
    w.controller = make_controller(ControllerId::Apf);
    w.noise.std = VectorXd::Zero(nav::kStateDim);
    w.floor_std = VectorXd::Constant(2, 0.3);
    std::mt19937_64 rng(4);
    const VectorXd s = nav::sample_observation(rng);
    const auto est = mc_prior_estimate(w, s, rng);
    CHECK(est.distribution.mean() == w.controller(s));
    CHECK(est.raw_std.isZero(0.0));
    CHECK(est.floor_engaged.all());
    CHECK((est.distribution.stddev().array() == 0.3).all());
}

TEST_CASE("mc prior: linear controller recovers the analytic pushforward") {
    Eigen::MatrixXd a(2, 4);
    a << 1.0, -0.5, 0.2, 0.0,
         0.3, 0.3, -1.0, 2.0;
    VectorXd noise(4);
    noise << 0.1, 0.2, 0.05, 0.3;
    ControlPriorWrapper w;
    w.controller = [a](const VectorXd& s) -> VectorXd { return a * s; };
    w.noise.std = noise;
    w.samples = 20000;
    w.floor_std = VectorXd::Constant(2, 1e-6);
    VectorXd s(4);
    s << 0.5, -1.0, 2.0, 0.1;
    std::mt19937_64 rng(5);
    const auto est = mc_prior_estimate(w, s, rng);
    const VectorXd sd = (a.array().square().matrix() * noise.array().square().matrix()).cwiseSqrt();
    const VectorXd mu = a * s;
    for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(est.distribution.stddev()[i] - sd[i]) < 0.03 * sd[i]);
        CHECK(std::abs(est.distribution.mean()[i] - mu[i]) < 4 * sd[i] / std::sqrt(20000.0));
        CHECK_FALSE(est.floor_engaged[i]);
    }
}

TEST_CASE("property: the prior std never drops below the floor") {
    ControlPriorWrapper w;
    w.controller = make_controller(ControllerId::Rrmc);
    w.noise = SensorNoiseModel::reacher_default();
    w.floor_std = VectorXd::Constant(7, 0.25 / 1.74);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 300; ++i) {
        const auto est = mc_prior_estimate(w, reacher::sample_observation(rng), rng);
        CHECK((est.distribution.stddev().array() >= w.floor_std.array()).all());
        for (int d = 0; d < 7; ++d) CHECK(est.floor_engaged[d] == (est.raw_std[d] < w.floor_std[d]));
    }
}

TEST_CASE("mc prior is reproducible for a given generator state") {
    ControlPriorWrapper w;
    w.controller = make_controller(ControllerId::Apf);
    w.noise = SensorNoiseModel::nav_default();
    w.floor_std = VectorXd::Constant(2, 0.3);
    std::mt19937_64 g(7);
    const VectorXd s = nav::sample_observation(g);
    std::mt19937_64 r1(8), r2(8);
    CHECK(mc_prior_distribution(w, s, r1) == mc_prior_distribution(w, s, r2));
}

TEST_CASE("mc prior errors") {
    ControlPriorWrapper w;
    w.controller = [](const VectorXd&) -> VectorXd { throw std::runtime_error("sensor dropout"); };
    w.noise.std = VectorXd::Zero(3);
    w.floor_std = VectorXd::Ones(1);
    std::mt19937_64 rng(9);
    CHECK_THROWS_AS(mc_prior_estimate(w, VectorXd::Zero(3), rng), ControllerError);
    CHECK_THROWS_AS(mc_prior_estimate(w, VectorXd::Zero(4), rng), ContractViolation);

    w.controller = [](const VectorXd&) -> VectorXd { return VectorXd::Zero(2); };
    CHECK_THROWS_AS(mc_prior_estimate(w, VectorXd::Zero(3), rng), ContractViolation);
    w.samples = 1;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w.samples = 50;
    w.floor_std = VectorXd::Zero(1);
    CHECK_THROWS_AS(w.validate(), ConfigError);
    CHECK_THROWS_AS(SensorNoiseModel::nav_default().validate(20), ConfigError);
}

TEST_CASE("controller ids round trip") {
    for (auto id : {ControllerId::Apf, ControllerId::ApfSmooth, ControllerId::Rrmc, ControllerId::RrmcManipulability})
        CHECK(controller_id_from_string(to_string(id)) == id);
    CHECK_THROWS_AS(controller_id_from_string("pid"), ConfigError);
}
