#include <cmath>
#include <random>

#include <doctest.h>

#include "bcf/priors.hpp"
#include "bcf/reacher_env.hpp"

using namespace bcf;
using namespace bcf::reacher;

TEST_CASE("observation layout") {
    ReacherWorld world;
    std::mt19937_64 rng(1);
    const auto obs = world.reset(rng);
    const Eigen::VectorXd v = obs.to_vector();
    CHECK(v.size() == 20);
    const auto back = Observation::from_vector(v);
    CHECK(back.q == obs.q);
    CHECK(back.goal_error == obs.goal_error);
    CHECK((obs.goal() - world.goal()).norm() < 1e-12);
    CHECK((obs.ee_position - forward_kinematics(world.model(), world.q()).translation()).norm() < 1e-12);
}

TEST_CASE("zero action keeps q; the reward is the manipulability away from the goal") {
    ReacherWorld world;
    const Vector7 q = ArmModel<double>::ready_pose();
    world.reset_to(q, Eigen::Vector3d(0.5, 0.3, 0.4));
    const auto r = world.step(Vector7::Zero());
    CHECK(world.q() == q);
    CHECK_FALSE(r.info.goal_reached);
    CHECK(r.reward == doctest::Approx(manipulability(world.model(), q)));
    CHECK(r.reward == r.info.manipulability);
}

TEST_CASE("reward is one inside the goal threshold") {
    ReacherWorld world;
    const Vector7 q = ArmModel<double>::ready_pose();
    const Eigen::Vector3d ee = forward_kinematics(world.model(), q).translation();
    world.reset_to(q, ee + Eigen::Vector3d(0.01, 0.0, 0.0));
    const auto r = world.step(Vector7::Zero());
    CHECK(r.info.goal_reached);
    CHECK(r.reward == 1.0);
    CHECK_FALSE(r.done);
}

TEST_CASE("saturated actions move each joint by qd_max * dt") {
    ReacherWorld world;
    const Vector7 q = ArmModel<double>::ready_pose();
    world.reset_to(q, Eigen::Vector3d(0.5, 0.0, 0.5));
    Vector7 a;
    a << 3.0, -3.0, 1.0, -1.0, 2.0, -2.0, 1.0;
    const auto r = world.step(a);
    for (int i = 0; i < 7; ++i) {
        CHECK(std::abs(world.q()[i] - q[i]) == doctest::Approx(1.74 * 0.01).epsilon(1e-9));
        CHECK(std::abs(r.observation.qd[i]) == doctest::Approx(1.74));
    }
}

TEST_CASE("joint limits clamp and zero the reported velocity") {
    ReacherWorld world;
    Vector7 q = ArmModel<double>::ready_pose();
    q[0] = world.model().upper[0];
    world.reset_to(q, Eigen::Vector3d(0.5, 0.0, 0.5));
    Vector7 a = Vector7::Zero();
    a[0] = 1.0;
    const auto r = world.step(a);
    CHECK(world.q()[0] == world.model().upper[0]);
    CHECK(r.observation.qd[0] == 0.0);
}

TEST_CASE("episodes last the horizon") {
    ReacherConfig cfg;
    cfg.horizon = 5;
    ReacherWorld world(cfg);
    world.reset_to(ArmModel<double>::ready_pose(), Eigen::Vector3d(0.5, 0.0, 0.5));
    for (int i = 0; i < 4; ++i) CHECK_FALSE(world.step(Vector7::Zero()).done);
    CHECK(world.step(Vector7::Zero()).done);
    CHECK_THROWS_AS(world.step(Vector7::Zero()), ContractViolation);
}

TEST_CASE("goal regions split on the sign of x") {
    for (auto region : {GoalRegion::InDistribution, GoalRegion::OutOfDistribution}) {
        ReacherConfig cfg;
        cfg.goal_region = region;
        ReacherWorld world(cfg);
        std::mt19937_64 rng(2);
        for (int i = 0; i < 200; ++i) {
            world.reset(rng);
            const auto& g = world.goal();
            CHECK(goal_in_distribution(g) == (region == GoalRegion::InDistribution));
            CHECK(g.z() >= cfg.min_goal_height);
            CHECK(g.head<2>().norm() >= cfg.min_goal_radius);
            CHECK(min_link_separation(world.model(), world.q()) >= cfg.self_proximity);
            CHECK(world.model().within_limits(world.q()));
        }
    }
    CHECK(goal_region_from_string("out") == GoalRegion::OutOfDistribution);
    CHECK_THROWS_AS(goal_region_from_string("left"), ConfigError);
}

TEST_CASE("resets are reproducible") {
    ReacherWorld a, b;
    std::mt19937_64 ra(3), rb(3);
    for (int i = 0; i < 50; ++i) CHECK(a.reset(ra).to_vector() == b.reset(rb).to_vector());
}

TEST_CASE("self proximity flag follows the link separation") {
    ReacherWorld world;
    std::mt19937_64 rng(4);
    const auto& m = world.model();
    int flagged = 0;
    for (int i = 0; i < 500; ++i) {
        Vector7 q;
        for (int k = 0; k < 7; ++k) q[k] = std::uniform_real_distribution<double>(m.lower[k], m.upper[k])(rng);
        world.reset_to(q, Eigen::Vector3d(0.5, 0.0, 0.5));
        const auto r = world.step(Vector7::Zero());
        CHECK(r.info.self_proximity == (min_link_separation(m, q) < world.config().self_proximity));
        flagged += r.info.self_proximity;
    }
    CHECK(min_link_separation(m, ArmModel<double>::ready_pose()) > 0.08);
}

TEST_CASE("rrmc drives the arm onto in-distribution goals") {
    ReacherWorld world;
    std::mt19937_64 rng(5);
    const RrmcParams params;
    int reached = 0;
    for (int ep = 0; ep < 30; ++ep) {
        auto obs = world.reset(rng);
        bool hit = false;
        while (!world.done() && !hit) {
            const auto r = world.step(rrmc_action(obs, params, world.model()));
            obs = r.observation;
            hit = r.info.goal_reached;
        }
        reached += hit;
    }
    CHECK(reached >= 29);
}

TEST_CASE("config validation") {
    ReacherConfig cfg;
    cfg.start_margin = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.dt = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
