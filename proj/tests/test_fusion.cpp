#include <cmath>
#include <random>

#include <doctest.h>

#include "bcf/fusion.hpp"
#include "oracles.hpp"

using bcf::ActionBounds;
using bcf::ActionDistribution;
using Eigen::VectorXd;

namespace {

ActionDistribution<double> dist1(double m, double s) {
    return ActionDistribution<double>(VectorXd::Constant(1, m), VectorXd::Constant(1, s));
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

}  // namespace

TEST_CASE("fused moments match numerical integration of the product") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> mean(-5.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        const double m1 = mean(rng), m2 = mean(rng);
        const double s1 = log_uniform(rng, 1e-3, 1e3), s2 = log_uniform(rng, 1e-3, 1e3);
        const auto ref = oracle::product_of_pdfs(m1, s1, m2, s2);
        const auto f = bcf::fuse(dist1(m1, s1), dist1(m2, s2));
        const double sd = std::sqrt(ref.variance);
        CHECK(std::abs(f.mean()[0] - ref.mean) <= 1e-6 * std::max(std::abs(ref.mean), sd));
        CHECK(std::abs(f.variance()[0] - ref.variance) <= 1e-6 * ref.variance);
    }
}

TEST_CASE("worked examples") {
    auto f = bcf::fuse(dist1(1.0, 1.0), dist1(-1.0, 1.0));
    CHECK(f.mean()[0] == doctest::Approx(0.0));
    CHECK(f.variance()[0] == doctest::Approx(0.5));

    f = bcf::fuse(dist1(2.0, 1.0), dist1(0.0, 3.0));
    CHECK(f.mean()[0] == doctest::Approx(1.8));
    CHECK(f.variance()[0] == doctest::Approx(0.9));
}

TEST_CASE("equal variances average the means per dimension") {
    VectorXd mp(3), mq(3);
    mp << 0.4, -1.0, 2.5;
    mq << -0.2, 0.0, 0.5;
    VectorXd s = VectorXd::Constant(3, 0.7);
    const auto f = bcf::fuse(ActionDistribution<double>(mp, s), ActionDistribution<double>(mq, s));
    for (int i = 0; i < 3; ++i) {
        CHECK(f.mean()[i] == doctest::Approx(0.5 * (mp[i] + mq[i])).epsilon(1e-14));
        CHECK(f.variance()[i] == doctest::Approx(0.49 / 2).epsilon(1e-14));
    }
}

TEST_CASE("property: precision adds, mean is a convex combination, order does not matter") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> mean(-10.0, 10.0);
    for (int i = 0; i < 2000; ++i) {
        const double m1 = mean(rng), m2 = mean(rng);
        const double s1 = log_uniform(rng, 1e-3, 1e3), s2 = log_uniform(rng, 1e-3, 1e3);
        const auto ab = bcf::fuse(dist1(m1, s1), dist1(m2, s2));
        const auto ba = bcf::fuse(dist1(m2, s2), dist1(m1, s1));
        const double prec = 1.0 / (s1 * s1) + 1.0 / (s2 * s2);
        CHECK(1.0 / ab.variance()[0] == doctest::Approx(prec).epsilon(1e-12));
        CHECK(ab.stddev()[0] <= std::min(s1, s2) * (1 + 1e-12));
        CHECK(ab.mean()[0] >= std::min(m1, m2) - 1e-12);
        CHECK(ab.mean()[0] <= std::max(m1, m2) + 1e-12);
        CHECK(ab.mean()[0] == doctest::Approx(ba.mean()[0]).epsilon(1e-13));
        CHECK(ab.stddev()[0] == doctest::Approx(ba.stddev()[0]).epsilon(1e-13));
    }
}

TEST_CASE("property: a more confident prior pulls the mean closer") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> mean(-3.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        const double mp = mean(rng), mq = mean(rng), sp = log_uniform(rng, 0.01, 10.0);
        double prev = std::numeric_limits<double>::infinity();
        for (double sq = 10.0; sq > 0.01; sq /= 1.5) {
            const double gap = std::abs(bcf::fuse(dist1(mp, sp), dist1(mq, sq)).mean()[0] - mq);
            CHECK(gap <= prev + 1e-12);
            prev = gap;
        }
    }
}

TEST_CASE("tiny stds are floored and flagged") {
    const auto r = bcf::fuse_detailed(dist1(1.0, 1e-12), dist1(0.0, 1.0));
    CHECK(r.floor_engaged);
    CHECK(std::isfinite(r.fused.mean()[0]));
    CHECK(r.fused.stddev()[0] > 0.0);
    CHECK(r.fused.mean()[0] == doctest::Approx(1.0).epsilon(1e-12));

    const auto ok = bcf::fuse_detailed(dist1(1.0, 1e-3), dist1(0.0, 1e3));
    CHECK_FALSE(ok.floor_engaged);
}

TEST_CASE("contract violations") {
    CHECK_THROWS_AS(ActionDistribution<double>(VectorXd::Zero(2), VectorXd::Ones(3)), bcf::ContractViolation);
    CHECK_THROWS_AS(ActionDistribution<double>(VectorXd::Zero(1), VectorXd::Zero(1)), bcf::ContractViolation);
    CHECK_THROWS_AS(ActionDistribution<double>(VectorXd::Zero(1), VectorXd::Constant(1, -1.0)),
                    bcf::ContractViolation);
    CHECK_THROWS_AS(ActionDistribution<double>(VectorXd::Constant(1, NAN), VectorXd::Ones(1)),
                    bcf::ContractViolation);
    CHECK_THROWS_AS(ActionDistribution<double>(VectorXd::Zero(1), VectorXd::Constant(1, INFINITY)),
                    bcf::ContractViolation);
    CHECK_THROWS_AS(ActionDistribution<double>(VectorXd(0), VectorXd(0)), bcf::ContractViolation);
    CHECK_THROWS_AS(bcf::GaussianSpec<double>::make(0.0, 0.0), bcf::ContractViolation);

    const ActionDistribution<double> two(VectorXd::Zero(2), VectorXd::Ones(2));
    const ActionDistribution<double> three(VectorXd::Zero(3), VectorXd::Ones(3));
    CHECK_THROWS_AS(bcf::fuse(two, three), bcf::ContractViolation);

    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(bcf::sample(two, rng, ActionBounds<double>::symmetric(3, 1.0)), bcf::ContractViolation);
    CHECK_THROWS_AS(ActionBounds<double>(VectorXd::Ones(1), VectorXd::Zero(1)), bcf::ContractViolation);
}

TEST_CASE("single precision instantiation") {
    using D = ActionDistribution<float>;
    const D a(Eigen::VectorXf::Constant(2, 1.0f), Eigen::VectorXf::Constant(2, 1.0f));
    const D b(Eigen::VectorXf::Constant(2, -1.0f), Eigen::VectorXf::Constant(2, 1.0f));
    const D f = bcf::fuse(a, b);
    CHECK(f.mean()[0] == doctest::Approx(0.0f));
    CHECK(f.variance()[1] == doctest::Approx(0.5f));
}

TEST_CASE("from_specs keeps dimension order") {
    const auto d = ActionDistribution<double>::from_specs({bcf::GaussianSpec<double>::make(1.0, 0.5),
                                                          bcf::GaussianSpec<double>::make(-2.0, 2.0)});
    CHECK(d.size() == 2);
    CHECK(d[1].mean == -2.0);
    CHECK(d[0].variance() == 0.25);
}

TEST_CASE("sampling respects the moments and the bounds") {
    VectorXd m(2), s(2);
    m << 0.3, -0.2;
    s << 0.1, 0.4;
    const ActionDistribution<double> d(m, s);
    const auto wide = ActionBounds<double>::symmetric(2, 100.0);
    std::mt19937_64 rng(5);
    const int n = 200000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) {
        const VectorXd a = bcf::sample(d, rng, wide);
        sum += a;
        sq += a.cwiseProduct(a);
    }
    const Eigen::Vector2d mu = sum / n;
    const Eigen::Vector2d var = sq / n - mu.cwiseProduct(mu);
    for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(mu[i] - m[i]) < 4 * s[i] / std::sqrt(double(n)));
        CHECK(std::abs(var[i] - s[i] * s[i]) < 4 * s[i] * s[i] * std::sqrt(2.0 / n));
    }

    const auto tight = ActionBounds<double>::symmetric(2, 0.25);
    for (int i = 0; i < 1000; ++i) {
        const VectorXd a = bcf::sample(d, rng, tight);
        CHECK((a.array().abs() <= 0.25).all());
    }
}

TEST_CASE("mode is the clamped mean and bcf_step is reproducible") {
    VectorXd m(2);
    m << 2.0, -0.3;
    const ActionDistribution<double> d(m, VectorXd::Constant(2, 0.2));
    const auto bounds = ActionBounds<double>::symmetric(2, 1.0);
    const VectorXd a = bcf::mode(d, bounds);
    CHECK(a[0] == 1.0);
    CHECK(a[1] == -0.3);

    const ActionDistribution<double> q(VectorXd::Zero(2), VectorXd::Constant(2, 0.2));
    std::mt19937_64 r1(9), r2(9);
    const auto s1 = bcf::bcf_step(d, q, r1, bounds);
    const auto s2 = bcf::bcf_step(d, q, r2, bounds);
    CHECK(s1.action == s2.action);
    CHECK(s1.fused == bcf::fuse(d, q));

    std::mt19937_64 r3(9);
    const auto det = bcf::bcf_step(d, q, r3, bounds, bcf::ActionSelection::Mode);
    CHECK(det.action == bcf::mode(det.fused, bounds));
}
