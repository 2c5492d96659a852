#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "bcf/policy.hpp"

using namespace bcf;
using Eigen::VectorXd;

namespace {

class FixedPolicy final : public StochasticPolicy {
public:
    FixedPolicy(VectorXd mean, VectorXd stddev) : mean_(std::move(mean)), std_(std::move(stddev)) {}
    Eigen::Index input_dim() const override { return 3; }
    Eigen::Index action_dim() const override { return mean_.size(); }
    ActionDistribution<double> forward(const VectorXd&) const override { return {mean_, std_}; }

private:
    VectorXd mean_, std_;
};

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "bcf_test_policy";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

PolicyEnsemble small_mlp_ensemble(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<PolicyEnsemble::Member> members;
    for (int i = 0; i < 3; ++i)
        members.push_back(std::make_shared<MlpPolicy>(MlpPolicy::random(4, 2, {8, 6}, rng)));
    return PolicyEnsemble(members);
}

LoadErrorKind load_kind(const std::string& path) {
    try {
        load_ensemble(path);
    } catch (const EnsembleLoadError& e) {
        return e.kind();
    }
    FAIL("expected EnsembleLoadError");
    return LoadErrorKind::MissingFile;
}

}  // namespace

TEST_CASE("mixture moments match Monte-Carlo draws from the mixture") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> mu(-2.0, 2.0), sd(0.05, 1.5);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 2 + trial % 5;
        std::vector<PolicyEnsemble::Member> members;
        for (int i = 0; i < m; ++i) {
            VectorXd a(2), s(2);
            a << mu(rng), mu(rng);
            s << sd(rng), sd(rng);
            members.push_back(std::make_shared<FixedPolicy>(a, s));
        }
        const PolicyEnsemble ens(members);
        const auto pred = ensemble_predict(ens, VectorXd::Zero(3));

        const int n = 200000;
        std::uniform_int_distribution<int> pick(0, m - 1);
        std::normal_distribution<double> unit;
        for (int d = 0; d < 2; ++d) {
            double s1 = 0, s2 = 0;
            for (int k = 0; k < n; ++k) {
                const auto member = members[static_cast<size_t>(pick(rng))]->forward(VectorXd::Zero(3));
                const double x = member.mean()[d] + member.stddev()[d] * unit(rng);
                s1 += x;
                s2 += x * x;
            }
            const double mean = s1 / n, var = s2 / n - mean * mean;
            CHECK(std::abs(mean - pred.mean()[d]) < 4.5 * std::sqrt(pred.variance()[d] / n));
            CHECK(std::abs(var - pred.variance()[d]) < 0.03 * pred.variance()[d]);
        }
    }
}

TEST_CASE("mixture of identical members is that member") {
    VectorXd a(2), s(2);
    a << 0.3, -0.7;
    s << 0.2, 0.9;
    auto p = std::make_shared<FixedPolicy>(a, s);
    const auto pred = ensemble_predict(PolicyEnsemble({p, p, p, p}), VectorXd::Zero(3));
    CHECK((pred.mean() - a).norm() < 1e-15);
    CHECK((pred.stddev() - s).norm() < 1e-12);
}

TEST_CASE("two members: variance adds the spread of the means") {
    auto a = std::make_shared<FixedPolicy>(VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 0.5));
    auto b = std::make_shared<FixedPolicy>(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 0.5));
    const auto pred = ensemble_predict(PolicyEnsemble({a, b}), VectorXd::Zero(3));
    CHECK(pred.mean()[0] == doctest::Approx(0.0));
    CHECK(pred.variance()[0] == doctest::Approx(0.25 + 1.0));
}

TEST_CASE("ensemble rejects mismatched members") {
    auto a = std::make_shared<FixedPolicy>(VectorXd::Zero(1), VectorXd::Ones(1));
    auto b = std::make_shared<FixedPolicy>(VectorXd::Zero(2), VectorXd::Ones(2));
    CHECK_THROWS_AS(PolicyEnsemble({a, b}), ContractViolation);
    CHECK_THROWS_AS(PolicyEnsemble({}), ContractViolation);
}

TEST_CASE("mlp forward shapes and std bounds") {
    const auto ens = small_mlp_ensemble(1);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 50.0);
    for (int i = 0; i < 200; ++i) {
        VectorXd s(4);
        for (int k = 0; k < 4; ++k) s[k] = n(rng);
        for (const auto& m : ens.members()) {
            const auto d = m->forward(s);
            CHECK(d.size() == 2);
            CHECK((d.stddev().array() >= MlpPolicy::kMinStd).all());
            CHECK((d.stddev().array() <= MlpPolicy::kMaxStd).all());
        }
    }
    CHECK_THROWS_AS(ens.members()[0]->forward(VectorXd::Zero(5)), ContractViolation);
}

TEST_CASE("weights round trip preserves outputs and checksum") {
    const auto ens = small_mlp_ensemble(3);
    const std::string path = temp_path("roundtrip.json");
    save_ensemble(ens, path);
    const auto back = load_ensemble(path);
    CHECK(parameter_checksum(back) == parameter_checksum(ens));
    CHECK(back.size() == ens.size());
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    for (int i = 0; i < 20; ++i) {
        VectorXd s(4);
        for (int k = 0; k < 4; ++k) s[k] = n(rng);
        CHECK(ensemble_predict(back, s) == ensemble_predict(ens, s));
    }
    CHECK(parameter_checksum(small_mlp_ensemble(4)) != parameter_checksum(ens));
}

TEST_CASE("weights load errors are typed") {
    CHECK(load_kind(temp_path("does_not_exist.json")) == LoadErrorKind::MissingFile);

    const std::string bad = temp_path("bad.json");
    write_text(bad, "{\"format_version\": 1, \"members\": [");
    CHECK(load_kind(bad) == LoadErrorKind::MalformedJson);

    auto j = ensemble_to_json(small_mlp_ensemble(5));
    j["members"][0]["head_b"][0] = nullptr;
    write_text(bad, j.dump());
    CHECK(load_kind(bad) == LoadErrorKind::NonFiniteParameter);

    j = ensemble_to_json(small_mlp_ensemble(5));
    std::string text = j.dump();
    const auto pos = text.find("\"head_b\":[") + 10;
    text.insert(pos, "NaN,");
    write_text(bad, text);
    CHECK(load_kind(bad) == LoadErrorKind::NonFiniteParameter);

    j = ensemble_to_json(small_mlp_ensemble(5));
    j["members"][1]["layers"][0]["b"].erase(0);
    write_text(bad, j.dump());
    CHECK(load_kind(bad) == LoadErrorKind::ShapeMismatch);

    j = ensemble_to_json(small_mlp_ensemble(5));
    j["members"] = nlohmann::json::array();
    write_text(bad, j.dump());
    CHECK(load_kind(bad) == LoadErrorKind::EmptyEnsemble);
}

TEST_CASE("surrogate members agree inside the region and spread outside") {
    SurrogateSpec spec;
    spec.expert = ControllerId::RrmcManipulability;
    spec.region = TrainingRegion::reacher_default();
    spec.sigma_in = 0.05;
    spec.seed = 9;
    const auto ens = build_surrogate_ensemble(spec);
    CHECK(ens.size() == 5);
    CHECK(ens.input_dim() == reacher::kStateDim);

    std::mt19937_64 rng(10);
    double inside = 0, outside = 0;
    int n_in = 0, n_out = 0;
    for (int i = 0; i < 400; ++i) {
        const VectorXd s = reacher::sample_observation(rng);
        const auto pred = ensemble_predict(ens, s);
        const double sd = pred.stddev().mean();
        const double deg = spec.region.outside_degree(s);
        CHECK(deg >= 0.0);
        CHECK(deg <= 1.0);
        if (deg == 0.0) {
            inside += sd;
            ++n_in;
            for (const auto& p : member_predictions(ens, s))
                CHECK(((p.mean() - pred.mean()).array().abs() <= 2 * 4 * 0.5 * spec.sigma_in + 1e-12).all());
        } else if (deg == 1.0) {
            outside += sd;
            ++n_out;
        }
    }
    REQUIRE(n_in > 20);
    REQUIRE(n_out > 20);
    CHECK(outside / n_out > 5.0 * inside / n_in);
}

TEST_CASE("surrogate perturbation is bounded and deterministic per seed") {
    SurrogateSpec spec;
    spec.seed = 3;
    const auto a = build_surrogate_ensemble(spec);
    const auto b = build_surrogate_ensemble(spec);
    std::mt19937_64 rng(12);
    for (int i = 0; i < 200; ++i) {
        const VectorXd s = nav::sample_observation(rng);
        CHECK(ensemble_predict(a, s) == ensemble_predict(b, s));
        for (const auto& m : a.members()) {
            const auto* sp = dynamic_cast<const SurrogatePolicy*>(m.get());
            REQUIRE(sp != nullptr);
            CHECK((sp->perturbation(s).array().abs() <= 4.0).all());
        }
    }
}

TEST_CASE("zero divergence gain with one member returns expert plus a bounded offset") {
    SurrogateSpec spec;
    spec.members = 1;
    spec.divergence_gain = 0.0;
    spec.sigma_in = 0.3;
    const auto ens = build_surrogate_ensemble(spec);
    const Controller expert = make_controller(spec.expert);
    std::mt19937_64 rng(13);
    for (int i = 0; i < 100; ++i) {
        const VectorXd s = nav::sample_observation(rng);
        const auto pred = ensemble_predict(ens, s);
        CHECK(((pred.mean() - expert(s)).array().abs() <= 0.5 * 0.3 * 4.0 + 1e-12).all());
        CHECK((pred.stddev().array() - 0.3).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("surrogate spec validation") {
    SurrogateSpec spec;
    spec.members = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = {};
    spec.sigma_in = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = {};
    spec.expert = ControllerId::Rrmc;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

class SmoothPolicy final : public StochasticPolicy {
public:
    explicit SmoothPolicy(std::uint64_t seed) : a_(2, 6) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 0.5);
        for (Eigen::Index i = 0; i < a_.size(); ++i) a_.data()[i] = n(rng);
    }
    Eigen::Index input_dim() const override { return 6; }
    Eigen::Index action_dim() const override { return 2; }
    ActionDistribution<double> forward(const VectorXd& s) const override {
        const VectorXd z = a_ * s;
        return {z.array().tanh().matrix(), (0.2 + 0.1 * z.array().sin()).matrix()};
    }

private:
    Eigen::MatrixXd a_;
};

TEST_CASE("distillation reproduces a smooth teacher") {
    const PolicyEnsemble teacher({std::make_shared<SmoothPolicy>(1), std::make_shared<SmoothPolicy>(2)});
    const auto sampler = [](std::mt19937_64& r) {
        std::normal_distribution<double> n;
        VectorXd s(6);
        for (int i = 0; i < 6; ++i) s[i] = n(r);
        return s;
    };
    DistillOptions opt;
    opt.samples = 3000;
    opt.hidden = {128};
    DistillReport report;
    const auto student = distill_to_mlp(teacher, sampler, opt, &report);
    REQUIRE(report.mean_rmse.size() == 2);
    CHECK(student.size() == 2);
    CHECK(student.input_dim() == 6);
    for (const auto* m : student.mlp_members()) CHECK(m != nullptr);
    for (double r : report.mean_rmse) CHECK(r < 0.1);

    std::mt19937_64 rng(99);
    double mean_sq = 0, std_sq = 0;
    int count = 0;
    for (int i = 0; i < 2000; ++i) {
        const VectorXd s = sampler(rng);
        for (size_t k = 0; k < 2; ++k) {
            const auto t = teacher.members()[k]->forward(s), p = student.members()[k]->forward(s);
            mean_sq += (t.mean() - p.mean()).squaredNorm();
            std_sq += (t.stddev() - p.stddev()).squaredNorm();
            count += 2;
        }
    }
    CHECK(std::sqrt(mean_sq / count) < 0.12);
    CHECK(std::sqrt(std_sq / count) < 0.05);

    const auto again = distill_to_mlp(teacher, sampler, opt);
    CHECK(parameter_checksum(again) == parameter_checksum(student));
}
