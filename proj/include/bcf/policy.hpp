#pragma once

// The learned side: Gaussian-head policies, ensembles of them, and the
// moment-matched collapse of a uniform ensemble mixture to one Gaussian per
// action dimension.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bcf/fusion.hpp"
#include "bcf/priors.hpp"

namespace bcf {

/// Any policy that maps a state to independent per-dimension Gaussians.
class StochasticPolicy {
public:
    virtual ~StochasticPolicy() = default;
    virtual Eigen::Index input_dim() const = 0;
    virtual Eigen::Index action_dim() const = 0;
    virtual ActionDistribution<double> forward(const Eigen::VectorXd& state) const = 0;
};

struct DenseLayer {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;  // out
};

/// Feed-forward tanh network with a (mean, log-std) head of width 2n.
class MlpPolicy final : public StochasticPolicy {
public:
    static constexpr double kMinStd = 1e-4;
    static constexpr double kMaxStd = 10.0;

    MlpPolicy(std::vector<DenseLayer> hidden, Eigen::MatrixXd head_w, Eigen::VectorXd head_b);

    /// Random initialisation (Glorot-style), hidden widths as given.
    static MlpPolicy random(Eigen::Index input_dim, Eigen::Index action_dim, const std::vector<int>& hidden,
                            std::mt19937_64& rng);

    Eigen::Index input_dim() const override;
    Eigen::Index action_dim() const override { return head_b_.size() / 2; }
    ActionDistribution<double> forward(const Eigen::VectorXd& state) const override;

    /// Output of the last hidden layer (the input itself when there is none).
    Eigen::VectorXd features(const Eigen::VectorXd& state) const;

    const std::vector<DenseLayer>& hidden() const { return hidden_; }
    const Eigen::MatrixXd& head_w() const { return head_w_; }
    const Eigen::VectorXd& head_b() const { return head_b_; }

private:
    std::vector<DenseLayer> hidden_;
    Eigen::MatrixXd head_w_;
    Eigen::VectorXd head_b_;
};

ActionDistribution<double> member_forward(const MlpPolicy& policy, const Eigen::VectorXd& state);

/// States where a surrogate's members agree. outside_degree() is 0 inside the
/// region and ramps smoothly to 1 over `ramp` units beyond its boundary.
struct TrainingRegion {
    enum class Kind {
        Everywhere,
        NavClearance,         // inside while the closest lidar return is >= threshold (m)
        ReacherGoalHalfspace, // inside while the goal x coordinate is >= threshold (m)
    };

    Kind kind = Kind::Everywhere;
    double threshold = 0.0;
    double ramp = 0.1;

    double outside_degree(const Eigen::VectorXd& state) const;
    bool contains(const Eigen::VectorXd& state) const { return outside_degree(state) == 0.0; }

    static TrainingRegion nav_default() { return {Kind::NavClearance, 0.45, 0.15}; }
    static TrainingRegion reacher_default() { return {Kind::ReacherGoalHalfspace, 0.0, 0.1}; }
};

struct SurrogateSpec {
    ControllerId expert = ControllerId::ApfSmooth;
    int members = 5;
    TrainingRegion region = TrainingRegion::nav_default();
    double sigma_in = 0.1;          // member std, and bound on in-region mean disagreement
    double divergence_gain = 20.0;  // g
    std::uint64_t seed = 1;

    void validate() const;
    Eigen::Index input_dim() const;
    Eigen::Index action_dim() const;
};

/// Stand-in for a trained agent: expert(s) + a(s) * p(s) with member std
/// sigma_in, where p is a member-specific smooth field (a sum of 8 random
/// sinusoids per action dimension, scaled to unit variance over random
/// phases) and a(s) = sigma_in * (1/2 + g * outside_degree(s)).
class SurrogatePolicy final : public StochasticPolicy {
public:
    static constexpr int kSinusoids = 8;

    SurrogatePolicy(Controller expert, Eigen::Index input_dim, Eigen::Index action_dim, TrainingRegion region,
                    double sigma_in, double divergence_gain, std::uint64_t member_seed);

    Eigen::Index input_dim() const override { return input_dim_; }
    Eigen::Index action_dim() const override { return action_dim_; }
    ActionDistribution<double> forward(const Eigen::VectorXd& state) const override;

    /// The member's perturbation field; each entry lies in [-4, 4].
    Eigen::VectorXd perturbation(const Eigen::VectorXd& state) const;

private:
    Controller expert_;
    Eigen::Index input_dim_;
    Eigen::Index action_dim_;
    TrainingRegion region_;
    double sigma_in_;
    double gain_;
    std::vector<Eigen::MatrixXd> frequencies_;  // per action dim: kSinusoids x input_dim
    std::vector<Eigen::VectorXd> phases_;       // per action dim: kSinusoids
};

class PolicyEnsemble {
public:
    using Member = std::shared_ptr<const StochasticPolicy>;

    explicit PolicyEnsemble(std::vector<Member> members);

    std::size_t size() const { return members_.size(); }
    Eigen::Index input_dim() const { return members_.front()->input_dim(); }
    Eigen::Index action_dim() const { return members_.front()->action_dim(); }
    const std::vector<Member>& members() const { return members_; }

    /// Non-null when every member is an MlpPolicy.
    std::vector<const MlpPolicy*> mlp_members() const;

private:
    std::vector<Member> members_;
};

/// Mean and variance of the uniform mixture of the members' Gaussians:
/// mean = M^-1 sum mu_m, var = M^-1 sum (s_m^2 + mu_m^2) - mean^2.
ActionDistribution<double> ensemble_predict(const PolicyEnsemble& ensemble, const Eigen::VectorXd& state);

/// Per-member outputs, for logging and diagnostics.
std::vector<ActionDistribution<double>> member_predictions(const PolicyEnsemble& ensemble,
                                                           const Eigen::VectorXd& state);

PolicyEnsemble build_surrogate_ensemble(const SurrogateSpec& spec);

// --- Weights file -----------------------------------------------------------

/// {"format_version":1, "input_dim", "action_dim", "members":[{"layers":[{"w","b"}], "head_w", "head_b"}]}
nlohmann::json ensemble_to_json(const PolicyEnsemble& ensemble);
PolicyEnsemble ensemble_from_json(const nlohmann::json& j);

void save_ensemble(const PolicyEnsemble& ensemble, const std::string& path);
PolicyEnsemble load_ensemble(const std::string& path);

/// FNV-1a over the bit patterns of every parameter, in file order.
std::uint64_t parameter_checksum(const PolicyEnsemble& ensemble);

// --- Distillation -----------------------------------------------------------

struct DistillOptions {
    std::vector<int> hidden = {64, 64};
    int samples = 4000;
    double ridge = 1e-5;
    std::uint64_t seed = 7;
};

struct DistillReport {
    std::vector<double> mean_rmse;  // per member, over the fitting states
};

/// Fits one MLP per ensemble member: random tanh hidden layers, ridge
/// regression for the (mean, log-std) head on states drawn from `sampler`.
PolicyEnsemble distill_to_mlp(const PolicyEnsemble& teacher,
                              const std::function<Eigen::VectorXd(std::mt19937_64&)>& sampler,
                              const DistillOptions& options, DistillReport* report = nullptr);

}  // namespace bcf
