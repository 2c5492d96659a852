#include "bcf/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include "bcf/errors.hpp"

namespace bcf {

namespace {

const double kLogMinStd = std::log(MlpPolicy::kMinStd);
const double kLogMaxStd = std::log(MlpPolicy::kMaxStd);

void check_layer_shapes(const std::vector<DenseLayer>& hidden, const Eigen::MatrixXd& head_w,
                        const Eigen::VectorXd& head_b) {
    for (size_t i = 0; i < hidden.size(); ++i) {
        const auto& l = hidden[i];
        BCF_REQUIRE(l.w.rows() == l.b.size() && l.w.rows() > 0 && l.w.cols() > 0,
                    "mlp: layer " + std::to_string(i) + " weight/bias shapes disagree");
        if (i > 0)
            BCF_REQUIRE(l.w.cols() == hidden[i - 1].w.rows(),
                        "mlp: layer " + std::to_string(i) + " input width does not match previous layer");
        BCF_REQUIRE(l.w.allFinite() && l.b.allFinite(), "mlp: non-finite parameter");
    }
    BCF_REQUIRE(head_b.size() >= 2 && head_b.size() % 2 == 0, "mlp: head width must be 2n");
    BCF_REQUIRE(head_w.rows() == head_b.size(), "mlp: head weight/bias shapes disagree");
    if (!hidden.empty())
        BCF_REQUIRE(head_w.cols() == hidden.back().w.rows(), "mlp: head input width does not match last layer");
    BCF_REQUIRE(head_w.allFinite() && head_b.allFinite(), "mlp: non-finite parameter");
}

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

std::uint64_t member_seed(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x5bcfu};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

// --- MlpPolicy ----------------------------------------------------------------

MlpPolicy::MlpPolicy(std::vector<DenseLayer> hidden, Eigen::MatrixXd head_w, Eigen::VectorXd head_b)
    : hidden_(std::move(hidden)), head_w_(std::move(head_w)), head_b_(std::move(head_b)) {
    check_layer_shapes(hidden_, head_w_, head_b_);
}

MlpPolicy MlpPolicy::random(Eigen::Index input_dim, Eigen::Index action_dim, const std::vector<int>& hidden,
                            std::mt19937_64& rng) {
    std::vector<DenseLayer> layers;
    Eigen::Index width = input_dim;
    for (int h : hidden) {
        layers.push_back({glorot(h, width, rng), Eigen::VectorXd::Zero(h)});
        width = h;
    }
    return MlpPolicy(std::move(layers), glorot(2 * action_dim, width, rng), Eigen::VectorXd::Zero(2 * action_dim));
}

Eigen::Index MlpPolicy::input_dim() const { return hidden_.empty() ? head_w_.cols() : hidden_.front().w.cols(); }

Eigen::VectorXd MlpPolicy::features(const Eigen::VectorXd& state) const {
    BCF_REQUIRE(state.size() == input_dim(), "mlp: state width " + std::to_string(state.size()) +
                                                 " does not match network input width " +
                                                 std::to_string(input_dim()));
    Eigen::VectorXd h = state;
    for (const auto& l : hidden_) h = (l.w * h + l.b).array().tanh().matrix();
    return h;
}

ActionDistribution<double> MlpPolicy::forward(const Eigen::VectorXd& state) const {
    const Eigen::VectorXd out = head_w_ * features(state) + head_b_;
    const Eigen::Index n = action_dim();
    const Eigen::VectorXd log_std = out.tail(n).cwiseMax(kLogMinStd).cwiseMin(kLogMaxStd);
    const Eigen::VectorXd stddev = log_std.array().exp().cwiseMax(kMinStd).cwiseMin(kMaxStd).matrix();
    return ActionDistribution<double>(out.head(n), stddev);
}

ActionDistribution<double> member_forward(const MlpPolicy& policy, const Eigen::VectorXd& state) {
    return policy.forward(state);
}

// --- Surrogates -------------------------------------------------------------

double TrainingRegion::outside_degree(const Eigen::VectorXd& state) const {
    double margin = 0.0;  // how far outside the region, in the region's own units
    switch (kind) {
        case Kind::Everywhere: return 0.0;
        case Kind::NavClearance: {
            const auto obs = nav::Observation::from_vector(state);
            margin = threshold - obs.lidar.minCoeff();
            break;
        }
        case Kind::ReacherGoalHalfspace: {
            const auto obs = reacher::Observation::from_vector(state);
            margin = threshold - obs.goal().x();
            break;
        }
    }
    if (margin <= 0.0) return 0.0;
    if (ramp <= 0.0) return 1.0;
    const double t = std::min(margin / ramp, 1.0);
    return t * t * (3.0 - 2.0 * t);  // smoothstep
}

void SurrogateSpec::validate() const {
    if (members < 1) throw ConfigError("surrogate: need at least one member");
    if (!(sigma_in > 0)) throw ConfigError("surrogate: sigma_in must be > 0");
    if (!(divergence_gain >= 0)) throw ConfigError("surrogate: divergence gain must be >= 0");
    if (!(region.ramp >= 0)) throw ConfigError("surrogate: region ramp must be >= 0");
    const bool nav_expert = expert == ControllerId::Apf || expert == ControllerId::ApfSmooth;
    if (region.kind == TrainingRegion::Kind::NavClearance && !nav_expert)
        throw ConfigError("surrogate: navigation region requires a navigation expert");
    if (region.kind == TrainingRegion::Kind::ReacherGoalHalfspace && nav_expert)
        throw ConfigError("surrogate: reacher region requires a reacher expert");
}

Eigen::Index SurrogateSpec::input_dim() const {
    return (expert == ControllerId::Apf || expert == ControllerId::ApfSmooth) ? nav::kStateDim : reacher::kStateDim;
}

Eigen::Index SurrogateSpec::action_dim() const {
    return (expert == ControllerId::Apf || expert == ControllerId::ApfSmooth) ? nav::kActionDim
                                                                              : reacher::kActionDim;
}

SurrogatePolicy::SurrogatePolicy(Controller expert, Eigen::Index input_dim, Eigen::Index action_dim,
                                 TrainingRegion region, double sigma_in, double divergence_gain,
                                 std::uint64_t member_seed_value)
    : expert_(std::move(expert)),
      input_dim_(input_dim),
      action_dim_(action_dim),
      region_(region),
      sigma_in_(sigma_in),
      gain_(divergence_gain) {
    BCF_REQUIRE(input_dim_ >= 1 && action_dim_ >= 1, "surrogate: dimensions must be positive");
    BCF_REQUIRE(sigma_in_ > 0 && gain_ >= 0, "surrogate: need sigma_in > 0 and g >= 0");
    std::mt19937_64 rng(member_seed_value);
    // Spatial frequencies of about one cycle per couple of state units.
    std::normal_distribution<double> freq(0.0, 2.0 / std::sqrt(static_cast<double>(input_dim_)));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    for (Eigen::Index d = 0; d < action_dim_; ++d) {
        Eigen::MatrixXd w(kSinusoids, input_dim_);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = freq(rng);
        Eigen::VectorXd p(kSinusoids);
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = phase(rng);
        frequencies_.push_back(std::move(w));
        phases_.push_back(std::move(p));
    }
}

Eigen::VectorXd SurrogatePolicy::perturbation(const Eigen::VectorXd& state) const {
    Eigen::VectorXd p(action_dim_);
    for (Eigen::Index d = 0; d < action_dim_; ++d) {
        const auto idx = static_cast<size_t>(d);
        p[d] = std::sqrt(2.0 / kSinusoids) * (frequencies_[idx] * state + phases_[idx]).array().sin().sum();
    }
    return p;
}

ActionDistribution<double> SurrogatePolicy::forward(const Eigen::VectorXd& state) const {
    BCF_REQUIRE(state.size() == input_dim_, "surrogate: state width mismatch");
    const Eigen::VectorXd base = expert_(state);
    BCF_REQUIRE(base.size() == action_dim_, "surrogate: expert output width mismatch");
    const double amplitude = sigma_in_ * (0.5 + gain_ * region_.outside_degree(state));
    return ActionDistribution<double>(base + amplitude * perturbation(state),
                                      Eigen::VectorXd::Constant(action_dim_, sigma_in_));
}

// --- Ensemble -----------------------------------------------------------------

PolicyEnsemble::PolicyEnsemble(std::vector<Member> members) : members_(std::move(members)) {
    BCF_REQUIRE(!members_.empty(), "policy ensemble: needs at least one member");
    for (const auto& m : members_) {
        BCF_REQUIRE(m != nullptr, "policy ensemble: null member");
        BCF_REQUIRE(m->input_dim() == members_.front()->input_dim() &&
                        m->action_dim() == members_.front()->action_dim(),
                    "policy ensemble: members disagree on input/output widths");
    }
}

std::vector<const MlpPolicy*> PolicyEnsemble::mlp_members() const {
    std::vector<const MlpPolicy*> out;
    for (const auto& m : members_) out.push_back(dynamic_cast<const MlpPolicy*>(m.get()));
    return out;
}

std::vector<ActionDistribution<double>> member_predictions(const PolicyEnsemble& ensemble,
                                                           const Eigen::VectorXd& state) {
    std::vector<ActionDistribution<double>> out;
    out.reserve(ensemble.size());
    for (const auto& m : ensemble.members()) out.push_back(m->forward(state));
    return out;
}

ActionDistribution<double> ensemble_predict(const PolicyEnsemble& ensemble, const Eigen::VectorXd& state) {
    const auto preds = member_predictions(ensemble, state);
    const double inv_m = 1.0 / static_cast<double>(preds.size());
    const Eigen::Index n = ensemble.action_dim();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (const auto& p : preds) mean += p.mean();
    mean *= inv_m;
    // Same quantity as M^-1 sum(s^2 + mu^2) - mean^2, summed as within-member
    // variance plus spread of the member means so it cannot cancel below zero.
    Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
    for (const auto& p : preds) var += p.variance() + (p.mean() - mean).cwiseAbs2();
    var *= inv_m;
    return ActionDistribution<double>::from_variance(std::move(mean), var);
}

PolicyEnsemble build_surrogate_ensemble(const SurrogateSpec& spec) {
    spec.validate();
    const Controller expert = make_controller(spec.expert);
    std::vector<PolicyEnsemble::Member> members;
    for (int m = 0; m < spec.members; ++m)
        members.push_back(std::make_shared<SurrogatePolicy>(expert, spec.input_dim(), spec.action_dim(), spec.region,
                                                            spec.sigma_in, spec.divergence_gain,
                                                            member_seed(spec.seed, static_cast<std::uint64_t>(m))));
    return PolicyEnsemble(std::move(members));
}

// --- Weights file -----------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

double number_from_json(const nlohmann::json& j, const std::string& where) {
    if (j.is_null()) throw EnsembleLoadError(LoadErrorKind::NonFiniteParameter, where + " is not finite");
    if (!j.is_number()) throw EnsembleLoadError(LoadErrorKind::MalformedJson, where + " is not a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw EnsembleLoadError(LoadErrorKind::NonFiniteParameter, where + " is not finite");
    return v;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) throw EnsembleLoadError(LoadErrorKind::MalformedJson, where + " must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = number_from_json(j[i], where + "[" + std::to_string(i) + "]");
    return v;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw EnsembleLoadError(LoadErrorKind::MalformedJson, where + " must be a non-empty array of rows");
    const size_t cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (size_t r = 0; r < j.size(); ++r) {
        if (!j[r].is_array() || j[r].size() != cols)
            throw EnsembleLoadError(LoadErrorKind::ShapeMismatch, where + " has ragged rows");
        for (size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                number_from_json(j[r][c], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    return m;
}

const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw EnsembleLoadError(LoadErrorKind::MalformedJson, where + " is missing \"" + key + "\"");
    return j.at(key);
}

}  // namespace

nlohmann::json ensemble_to_json(const PolicyEnsemble& ensemble) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["input_dim"] = ensemble.input_dim();
    j["action_dim"] = ensemble.action_dim();
    j["members"] = nlohmann::json::array();
    for (const MlpPolicy* m : ensemble.mlp_members()) {
        BCF_REQUIRE(m != nullptr, "ensemble_to_json: only MLP members can be serialised");
        nlohmann::json member;
        member["layers"] = nlohmann::json::array();
        for (const auto& l : m->hidden()) member["layers"].push_back({{"w", matrix_to_json(l.w)}, {"b", vector_to_json(l.b)}});
        member["head_w"] = matrix_to_json(m->head_w());
        member["head_b"] = vector_to_json(m->head_b());
        j["members"].push_back(std::move(member));
    }
    return j;
}

PolicyEnsemble ensemble_from_json(const nlohmann::json& j) {
    const auto version = field(j, "format_version", "ensemble");
    if (!version.is_number_integer() || version.get<int>() != 1)
        throw EnsembleLoadError(LoadErrorKind::MalformedJson, "unsupported format_version");
    const auto& in_j = field(j, "input_dim", "ensemble");
    const auto& out_j = field(j, "action_dim", "ensemble");
    if (!in_j.is_number_integer() || !out_j.is_number_integer())
        throw EnsembleLoadError(LoadErrorKind::MalformedJson, "input_dim/action_dim must be integers");
    const Eigen::Index input_dim = in_j.get<Eigen::Index>();
    const Eigen::Index action_dim = out_j.get<Eigen::Index>();
    const auto& members_j = field(j, "members", "ensemble");
    if (!members_j.is_array()) throw EnsembleLoadError(LoadErrorKind::MalformedJson, "members must be an array");
    if (members_j.empty()) throw EnsembleLoadError(LoadErrorKind::EmptyEnsemble, "ensemble has no members");

    std::vector<PolicyEnsemble::Member> members;
    for (size_t m = 0; m < members_j.size(); ++m) {
        const std::string where = "members[" + std::to_string(m) + "]";
        const auto& mj = members_j[m];
        std::vector<DenseLayer> layers;
        const auto& layers_j = field(mj, "layers", where);
        if (!layers_j.is_array()) throw EnsembleLoadError(LoadErrorKind::MalformedJson, where + ".layers must be an array");
        for (size_t l = 0; l < layers_j.size(); ++l) {
            const std::string lw = where + ".layers[" + std::to_string(l) + "]";
            layers.push_back({matrix_from_json(field(layers_j[l], "w", lw), lw + ".w"),
                              vector_from_json(field(layers_j[l], "b", lw), lw + ".b")});
        }
        Eigen::MatrixXd head_w = matrix_from_json(field(mj, "head_w", where), where + ".head_w");
        Eigen::VectorXd head_b = vector_from_json(field(mj, "head_b", where), where + ".head_b");

        // Shape checks against the declared widths and between layers.
        Eigen::Index width = input_dim;
        for (size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].w.cols() != width || layers[l].w.rows() != layers[l].b.size())
                throw EnsembleLoadError(LoadErrorKind::ShapeMismatch,
                                        where + ".layers[" + std::to_string(l) + "] has incompatible shape");
            width = layers[l].w.rows();
        }
        if (head_w.cols() != width || head_w.rows() != 2 * action_dim || head_b.size() != 2 * action_dim)
            throw EnsembleLoadError(LoadErrorKind::ShapeMismatch, where + " head has incompatible shape");
        members.push_back(std::make_shared<MlpPolicy>(std::move(layers), std::move(head_w), std::move(head_b)));
    }
    return PolicyEnsemble(std::move(members));
}

void save_ensemble(const PolicyEnsemble& ensemble, const std::string& path) {
    const auto j = ensemble_to_json(ensemble);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write ensemble file: " + path);
    out << j.dump() << '\n';
}

PolicyEnsemble load_ensemble(const std::string& path) {
    if (!std::filesystem::exists(path)) throw EnsembleLoadError(LoadErrorKind::MissingFile, path);
    std::ifstream in(path);
    if (!in) throw EnsembleLoadError(LoadErrorKind::MissingFile, path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Bare NaN / Infinity tokens are not JSON; report them as what they are.
        static const std::regex non_finite(R"((^|[\[,:\s])-?(NaN|nan|Infinity|inf)(?=[\],\s]))");
        const std::string patched = std::regex_replace(text, non_finite, "$1null");
        if (patched != text && nlohmann::json::accept(patched))
            throw EnsembleLoadError(LoadErrorKind::NonFiniteParameter, path + " contains NaN or infinite values");
        throw EnsembleLoadError(LoadErrorKind::MalformedJson, path + ": " + e.what());
    }
    PolicyEnsemble ensemble = ensemble_from_json(j);
    std::clog << "[bcf] loaded ensemble " << path << " members=" << ensemble.size() << " checksum=" << std::hex
              << parameter_checksum(ensemble) << std::dec << '\n';
    return ensemble;
}

std::uint64_t parameter_checksum(const PolicyEnsemble& ensemble) {
    std::uint64_t h = 1469598103934665603ull;
    const auto mix = [&h](double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    const auto mix_all = [&](const auto& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) mix(m(r, c));
    };
    for (const MlpPolicy* m : ensemble.mlp_members()) {
        if (m == nullptr) continue;
        for (const auto& l : m->hidden()) {
            mix_all(l.w);
            mix_all(l.b);
        }
        mix_all(m->head_w());
        mix_all(m->head_b());
    }
    return h;
}

// --- Distillation -----------------------------------------------------------

PolicyEnsemble distill_to_mlp(const PolicyEnsemble& teacher,
                              const std::function<Eigen::VectorXd(std::mt19937_64&)>& sampler,
                              const DistillOptions& options, DistillReport* report) {
    BCF_REQUIRE(options.samples >= 1 && options.ridge >= 0, "distill: need samples >= 1 and ridge >= 0");
    std::mt19937_64 rng(options.seed);
    std::vector<Eigen::VectorXd> states;
    states.reserve(static_cast<size_t>(options.samples));
    for (int i = 0; i < options.samples; ++i) states.push_back(sampler(rng));

    const Eigen::Index n = teacher.action_dim();
    const Eigen::Index in = teacher.input_dim();
    Eigen::VectorXd center = Eigen::VectorXd::Zero(in), scale = Eigen::VectorXd::Zero(in);
    for (const auto& s : states) center += s;
    center /= static_cast<double>(states.size());
    for (const auto& s : states) scale += (s - center).cwiseAbs2();
    scale = (scale / static_cast<double>(states.size())).cwiseSqrt().cwiseMax(1e-6);

    std::vector<PolicyEnsemble::Member> members;
    if (report) report->mean_rmse.clear();
    for (const auto& member : teacher.members()) {
        // Random tanh features on standardised inputs, pre-activations of unit scale.
        std::vector<DenseLayer> layers;
        Eigen::Index fan_in = in;
        std::normal_distribution<double> unit(0.0, 1.0);
        for (int h : options.hidden) {
            DenseLayer l{Eigen::MatrixXd(h, fan_in), Eigen::VectorXd(h)};
            for (Eigen::Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = unit(rng) / std::sqrt(double(fan_in));
            for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = 0.5 * unit(rng);
            layers.push_back(std::move(l));
            fan_in = h;
        }
        if (!layers.empty()) {
            layers[0].w = layers[0].w * scale.cwiseInverse().asDiagonal();
            layers[0].b -= layers[0].w * center;
        }
        const MlpPolicy net(std::move(layers), Eigen::MatrixXd::Zero(2 * n, fan_in), Eigen::VectorXd::Zero(2 * n));
        const Eigen::Index width = options.hidden.empty() ? teacher.input_dim() : options.hidden.back();
        Eigen::MatrixXd features(options.samples, width + 1);
        Eigen::MatrixXd targets(options.samples, 2 * n);
        for (int i = 0; i < options.samples; ++i) {
            const auto& s = states[static_cast<size_t>(i)];
            features.row(i) << net.features(s).transpose(), 1.0;
            const auto out = member->forward(s);
            targets.row(i) << out.mean().transpose(), out.stddev().array().log().matrix().transpose();
        }
        Eigen::MatrixXd gram = features.transpose() * features;
        gram.diagonal().array() += options.ridge * options.samples;
        const Eigen::MatrixXd coef = gram.ldlt().solve(features.transpose() * targets);  // (width+1) x 2n
        Eigen::MatrixXd head_w = coef.topRows(width).transpose();
        Eigen::VectorXd head_b = coef.row(width).transpose();
        MlpPolicy fitted(net.hidden(), head_w, head_b);
        if (report) {
            const Eigen::MatrixXd residual = (features * coef - targets).leftCols(n);
            report->mean_rmse.push_back(std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size())));
        }
        members.push_back(std::make_shared<MlpPolicy>(std::move(fitted)));
    }
    return PolicyEnsemble(std::move(members));
}

}  // namespace bcf
