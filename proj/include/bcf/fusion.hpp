#pragma once

// Per-dimension Gaussian action distributions and their normalised product.
//
// Every action dimension is an independent univariate Gaussian. Fusing a
// policy distribution N(mu_p, s_p^2) with a prior N(mu_q, s_q^2) gives
//
//   mu  = (mu_p * s_q^2 + mu_q * s_p^2) / (s_q^2 + s_p^2)
//   s^2 = s_p^2 * s_q^2 / (s_q^2 + s_p^2)
//
// The normalisation constant of the product never needs to be formed.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcf/errors.hpp"

namespace bcf {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Stds below this are raised to it inside fuse().
template <typename Scalar>
constexpr Scalar kFusionStdFloor = Scalar(1e-9);

template <typename Scalar = double>
struct GaussianSpec {
    Scalar mean;
    Scalar std;

    static GaussianSpec make(Scalar mean, Scalar std) {
        BCF_REQUIRE(std::isfinite(mean), "GaussianSpec: mean must be finite");
        BCF_REQUIRE(std::isfinite(std) && std > Scalar(0), "GaussianSpec: std must be finite and > 0");
        return {mean, std};
    }

    Scalar variance() const { return std * std; }
};

/// Independent Gaussians over the n action dimensions.
template <typename Scalar = double>
class ActionDistribution {
public:
    using Vector = VectorX<Scalar>;

    ActionDistribution(Vector mean, Vector stddev) : mean_(std::move(mean)), std_(std::move(stddev)) {
        BCF_REQUIRE(mean_.size() >= 1, "ActionDistribution: needs at least one dimension");
        BCF_REQUIRE(mean_.size() == std_.size(), "ActionDistribution: mean/std length mismatch");
        BCF_REQUIRE(mean_.allFinite(), "ActionDistribution: mean must be finite");
        BCF_REQUIRE(std_.allFinite() && (std_.array() > Scalar(0)).all(),
                    "ActionDistribution: std must be finite and > 0");
    }

    static ActionDistribution from_variance(Vector mean, const Vector& variance) {
        BCF_REQUIRE(variance.allFinite(), "ActionDistribution: variance must be finite");
        return ActionDistribution(std::move(mean), variance.array().sqrt().matrix());
    }

    static ActionDistribution from_specs(const std::vector<GaussianSpec<Scalar>>& dims) {
        Vector mean(static_cast<Eigen::Index>(dims.size()));
        Vector stddev(mean.size());
        for (Eigen::Index i = 0; i < mean.size(); ++i) {
            mean[i] = dims[static_cast<size_t>(i)].mean;
            stddev[i] = dims[static_cast<size_t>(i)].std;
        }
        return ActionDistribution(std::move(mean), std::move(stddev));
    }

    Eigen::Index size() const { return mean_.size(); }
    const Vector& mean() const { return mean_; }
    const Vector& stddev() const { return std_; }
    Vector variance() const { return std_.array().square().matrix(); }

    GaussianSpec<Scalar> operator[](Eigen::Index i) const { return {mean_[i], std_[i]}; }

    bool operator==(const ActionDistribution& other) const {
        return mean_ == other.mean_ && std_ == other.std_;
    }

private:
    Vector mean_;
    Vector std_;
};

/// Per-dimension execution limits [lo, hi].
template <typename Scalar = double>
struct ActionBounds {
    using Vector = VectorX<Scalar>;

    Vector lo;
    Vector hi;

    ActionBounds(Vector lower, Vector upper) : lo(std::move(lower)), hi(std::move(upper)) {
        BCF_REQUIRE(lo.size() == hi.size() && lo.size() >= 1, "ActionBounds: size mismatch");
        BCF_REQUIRE(lo.allFinite() && hi.allFinite(), "ActionBounds: bounds must be finite");
        BCF_REQUIRE((lo.array() < hi.array()).all(), "ActionBounds: need lo < hi");
    }

    static ActionBounds symmetric(Eigen::Index n, Scalar limit) {
        return ActionBounds(Vector::Constant(n, -limit), Vector::Constant(n, limit));
    }

    Eigen::Index size() const { return lo.size(); }

    Vector clamp(const Vector& v) const { return v.cwiseMax(lo).cwiseMin(hi); }
};

template <typename Scalar = double>
struct FusionResult {
    ActionDistribution<Scalar> fused;
    bool floor_engaged = false;  // some input std was raised to kFusionStdFloor
};

template <typename Scalar>
FusionResult<Scalar> fuse_detailed(const ActionDistribution<Scalar>& policy,
                                   const ActionDistribution<Scalar>& prior) {
    BCF_REQUIRE(policy.size() == prior.size(), "fuse: action dimensionality mismatch (" +
                                                   std::to_string(policy.size()) + " vs " +
                                                   std::to_string(prior.size()) + ")");
    const Scalar floor = kFusionStdFloor<Scalar>;
    const bool floored = (policy.stddev().array() < floor).any() || (prior.stddev().array() < floor).any();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> vp = policy.stddev().array().max(floor).square();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> vq = prior.stddev().array().max(floor).square();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> total = vp + vq;
    VectorX<Scalar> mean = ((policy.mean().array() * vq + prior.mean().array() * vp) / total).matrix();
    VectorX<Scalar> var = (vp * vq / total).matrix();
    return {ActionDistribution<Scalar>::from_variance(std::move(mean), var), floored};
}

/// Normalised product of two independent-Gaussian action distributions.
template <typename Scalar>
ActionDistribution<Scalar> fuse(const ActionDistribution<Scalar>& policy,
                                const ActionDistribution<Scalar>& prior) {
    return fuse_detailed(policy, prior).fused;
}

/// Draws one action per dimension, then clamps to the bounds.
template <typename Scalar, typename Rng>
VectorX<Scalar> sample(const ActionDistribution<Scalar>& dist, Rng& rng, const ActionBounds<Scalar>& bounds) {
    BCF_REQUIRE(dist.size() == bounds.size(), "sample: bounds dimensionality mismatch");
    std::normal_distribution<Scalar> unit(Scalar(0), Scalar(1));
    VectorX<Scalar> out(dist.size());
    for (Eigen::Index i = 0; i < dist.size(); ++i) out[i] = dist.mean()[i] + dist.stddev()[i] * unit(rng);
    return bounds.clamp(out);
}

/// Clamped per-dimension means; the deterministic evaluation action.
template <typename Scalar>
VectorX<Scalar> mode(const ActionDistribution<Scalar>& dist, const ActionBounds<Scalar>& bounds) {
    BCF_REQUIRE(dist.size() == bounds.size(), "mode: bounds dimensionality mismatch");
    return bounds.clamp(dist.mean());
}

enum class ActionSelection { Sample, Mode };

template <typename Scalar = double>
struct StepRecord {
    ActionDistribution<Scalar> policy;
    ActionDistribution<Scalar> prior;
    ActionDistribution<Scalar> fused;
    VectorX<Scalar> action;
    bool floor_engaged = false;
};

template <typename Scalar, typename Rng>
VectorX<Scalar> select_action(const ActionDistribution<Scalar>& dist, ActionSelection selection, Rng& rng,
                              const ActionBounds<Scalar>& bounds) {
    return selection == ActionSelection::Sample ? sample(dist, rng, bounds) : mode(dist, bounds);
}

/// One fusion step: fuse the two distributions and pick the executed action.
template <typename Scalar, typename Rng = std::mt19937_64>
StepRecord<Scalar> bcf_step(const ActionDistribution<Scalar>& policy, const ActionDistribution<Scalar>& prior,
                            Rng& rng, const ActionBounds<Scalar>& bounds,
                            ActionSelection selection = ActionSelection::Sample) {
    auto result = fuse_detailed(policy, prior);
    VectorX<Scalar> action = select_action(result.fused, selection, rng, bounds);
    return {policy, prior, std::move(result.fused), std::move(action), result.floor_engaged};
}

}  // namespace bcf
