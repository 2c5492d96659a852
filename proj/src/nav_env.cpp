#include "bcf/nav_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "bcf/errors.hpp"

namespace bcf::nav {

namespace {

constexpr double kSectorWidth = M_PI / kLidarBins;

double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a < 0) a += 2.0 * M_PI;
    return a - M_PI;
}

// Range along the ray o + t*dir (t >= 0) to segment s, or +inf.
double ray_segment(const Eigen::Vector2d& o, const Eigen::Vector2d& dir, const Segment& s) {
    const Eigen::Vector2d e = s.b - s.a;
    const double denom = dir.x() * e.y() - dir.y() * e.x();
    if (std::abs(denom) < 1e-15) return std::numeric_limits<double>::infinity();
    const Eigen::Vector2d w = s.a - o;
    const double t = (w.x() * e.y() - w.y() * e.x()) / denom;
    const double u = (w.x() * dir.y() - w.y() * dir.x()) / denom;
    if (t < 0.0 || u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
    return t;
}

double point_segment_distance(const Eigen::Vector2d& p, const Segment& s) {
    const Eigen::Vector2d e = s.b - s.a;
    const double len2 = e.squaredNorm();
    double t = len2 > 0 ? (p - s.a).dot(e) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (s.a + t * e - p).norm();
}

Rect rect_from_array(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 4) throw ConfigError(std::string("arena: ") + what + " must be [x0,y0,x1,y1]");
    Rect r{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!(r.x0 < r.x1 && r.y0 < r.y1)) throw ConfigError(std::string("arena: ") + what + " is empty");
    return r;
}

Rect box(double cx, double cy, double w, double h) { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }

std::vector<Segment> outer_walls(double w, double h) {
    return {{{0, 0}, {w, 0}}, {{w, 0}, {w, h}}, {{w, h}, {0, h}}, {{0, h}, {0, 0}}};
}

}  // namespace

double bin_center_angle(int i) { return -M_PI / 2 + (i + 0.5) * kSectorWidth; }

Eigen::VectorXd Observation::to_vector() const {
    Eigen::VectorXd s(kStateDim);
    s << lidar, goal_error, prev_action;
    return s;
}

Observation Observation::from_vector(const Eigen::VectorXd& s) {
    BCF_REQUIRE(s.size() == kStateDim, "nav observation must have width 19, got " + std::to_string(s.size()));
    Observation o;
    o.lidar = s.head<kLidarBins>();
    o.goal_error = s.segment<2>(kLidarBins);
    o.prev_action = s.segment<2>(kLidarBins + 2);
    return o;
}

std::vector<Segment> Arena::segments() const {
    std::vector<Segment> out = walls;
    for (const auto& b : boxes) {
        const Eigen::Vector2d p00(b.x0, b.y0), p10(b.x1, b.y0), p11(b.x1, b.y1), p01(b.x0, b.y1);
        out.push_back({p00, p10});
        out.push_back({p10, p11});
        out.push_back({p11, p01});
        out.push_back({p01, p00});
    }
    return out;
}

Arena arena_from_json(const nlohmann::json& j) {
    try {
        Arena a;
        a.name = j.value("name", std::string("custom"));
        for (const auto& w : j.at("walls")) {
            if (!w.is_array() || w.size() != 4) throw ConfigError("arena: wall must be [x1,y1,x2,y2]");
            a.walls.push_back({{w[0].get<double>(), w[1].get<double>()}, {w[2].get<double>(), w[3].get<double>()}});
        }
        for (const auto& b : j.value("boxes", nlohmann::json::array())) {
            if (!b.is_array() || b.size() != 4) throw ConfigError("arena: box must be [cx,cy,w,h]");
            const double w = b[2].get<double>(), h = b[3].get<double>();
            if (!(w > 0 && h > 0)) throw ConfigError("arena: box size must be positive");
            a.boxes.push_back(box(b[0].get<double>(), b[1].get<double>(), w, h));
        }
        a.start_region = rect_from_array(j.at("start_region"), "start_region");
        a.goal_region = rect_from_array(j.at("goal_region"), "goal_region");
        a.min_start_goal_distance = j.value("min_start_goal_distance", 2.0);
        a.out_of_distribution = j.value("out_of_distribution", false);
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("arena: ") + e.what());
    }
}

nlohmann::json arena_to_json(const Arena& a) {
    nlohmann::json j;
    j["name"] = a.name;
    j["walls"] = nlohmann::json::array();
    for (const auto& w : a.walls) j["walls"].push_back({w.a.x(), w.a.y(), w.b.x(), w.b.y()});
    j["boxes"] = nlohmann::json::array();
    for (const auto& b : a.boxes)
        j["boxes"].push_back({(b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2, b.x1 - b.x0, b.y1 - b.y0});
    j["start_region"] = {a.start_region.x0, a.start_region.y0, a.start_region.x1, a.start_region.y1};
    j["goal_region"] = {a.goal_region.x0, a.goal_region.y0, a.goal_region.x1, a.goal_region.y1};
    j["min_start_goal_distance"] = a.min_start_goal_distance;
    j["out_of_distribution"] = a.out_of_distribution;
    return j;
}

Arena load_arena(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("arena file not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("arena file " + path + " is not valid JSON: " + e.what());
    }
    return arena_from_json(j);
}

std::vector<std::string> builtin_arena_names() {
    return {"empty", "train_1", "train_2", "train_3", "train_4", "train_5", "ood_corridor", "ood_clutter"};
}

Arena builtin_arena(const std::string& name) {
    // Training arenas are 4.5 m x 3.6 m with passages of at least 1.4 m;
    // start and goal regions sit at the two short ends.
    constexpr double W = 4.5, H = 3.6;
    Arena a;
    a.name = name;
    a.walls = outer_walls(W, H);
    a.start_region = {0.6, 0.7, 0.9, 2.9};
    a.goal_region = {3.6, 0.7, 3.9, 2.9};
    a.min_start_goal_distance = 2.7;
    if (name == "empty") {
        a.walls = outer_walls(8.0, 8.0);
        a.start_region = {1.0, 1.0, 2.0, 7.0};
        a.goal_region = {6.0, 1.0, 7.0, 7.0};
        a.min_start_goal_distance = 4.0;
    } else if (name == "train_1") {
        a.boxes = {box(2.25, 1.8, 0.5, 0.8)};
    } else if (name == "train_2") {
        a.boxes = {box(1.7, 0.75, 0.5, 0.9), box(2.8, 2.85, 0.5, 0.9)};
    } else if (name == "train_3") {
        a.boxes = {box(2.25, 0.55, 0.4, 1.1)};
    } else if (name == "train_4") {
        a.boxes = {box(2.25, 0.4, 0.5, 0.8), box(2.25, 3.2, 0.5, 0.8)};
    } else if (name == "train_5") {
        a.boxes = {box(1.7, 2.6, 0.3, 0.3), box(2.6, 1.0, 0.3, 0.3), box(3.0, 2.8, 0.3, 0.3)};
    } else if (name == "ood_corridor") {
        // A single 0.8 m wide corridor through a wall block.
        a.boxes = {box(2.25, 0.7, 1.6, 1.4), box(2.25, 2.9, 1.6, 1.4)};
        a.start_region = {0.6, 1.5, 0.9, 2.1};
        a.goal_region = {3.6, 1.5, 3.9, 2.1};
        a.out_of_distribution = true;
    } else if (name == "ood_clutter") {
        // Dense posts with ~0.75 m gaps.
        for (double x : {1.5, 2.45, 3.4})
            for (double y : {0.45, 1.4, 2.35, 3.3}) a.boxes.push_back(box(x, y + (x == 2.45 ? 0.45 : 0.0), 0.2, 0.2));
        a.out_of_distribution = true;
    } else {
        throw ConfigError("unknown arena: " + name);
    }
    return a;
}

Arena resolve_arena(const std::string& name_or_path) {
    const auto names = builtin_arena_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_arena(name_or_path);
    return load_arena(name_or_path);
}

void NavConfig::validate() const {
    if (!(dt > 0 && v_max > 0 && w_max > 0 && robot_radius > 0 && d_threshold > 0 && max_range > 0))
        throw ConfigError("nav config: dt, v_max, w_max, robot_radius, d_threshold, max_range must be positive");
    if (horizon < 1) throw ConfigError("nav config: horizon must be >= 1");
    if (lidar_rays < kLidarBins || lidar_rays % kLidarBins != 0)
        throw ConfigError("nav config: lidar_rays must be a positive multiple of 15");
}

LidarBins lidar_scan(const std::vector<Segment>& segments, const Pose2& pose, const NavConfig& config) {
    LidarBins bins = LidarBins::Constant(config.max_range);
    const int per_bin = config.lidar_rays / kLidarBins;
    const double ray_step = M_PI / config.lidar_rays;
    const Eigen::Vector2d origin(pose.x, pose.y);
    for (int r = 0; r < config.lidar_rays; ++r) {
        const double rel = -M_PI / 2 + (r + 0.5) * ray_step;
        const Eigen::Vector2d dir(std::cos(pose.theta + rel), std::sin(pose.theta + rel));
        double range = config.max_range;
        for (const auto& s : segments) range = std::min(range, ray_segment(origin, dir, s));
        auto& bin = bins[r / per_bin];
        bin = std::min(bin, range);
    }
    return bins;
}

double clearance(const Arena& arena, const std::vector<Segment>& segments, const Eigen::Vector2d& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : segments) d = std::min(d, point_segment_distance(p, s));
    for (const auto& b : arena.boxes)
        if (b.contains(p)) return -d;
    return d;
}

NavWorld::NavWorld(Arena arena, NavConfig config)
    : arena_(std::move(arena)), config_(config), segments_(arena_.segments()) {
    config_.validate();
}

Observation NavWorld::reset(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> heading(-M_PI, M_PI);
    const double margin = config_.robot_radius + 0.1;
    const auto draw = [&](const Rect& r) {
        return Eigen::Vector2d(r.x0 + unit(rng) * (r.x1 - r.x0), r.y0 + unit(rng) * (r.y1 - r.y0));
    };
    const bool swap = unit(rng) < 0.5;
    const Rect& from = swap ? arena_.goal_region : arena_.start_region;
    const Rect& to = swap ? arena_.start_region : arena_.goal_region;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const Eigen::Vector2d start = draw(from);
        const Eigen::Vector2d goal = draw(to);
        const double theta = heading(rng);
        if (clearance(arena_, segments_, start) < margin) continue;
        if (clearance(arena_, segments_, goal) < margin) continue;
        if ((goal - start).norm() < arena_.min_start_goal_distance) continue;
        return reset_to({start.x(), start.y(), theta}, goal);
    }
    throw ArenaConfigError("arena '" + arena_.name + "': no collision-free start/goal pair after 1000 tries");
}

Observation NavWorld::reset_to(const Pose2& start, const Eigen::Vector2d& goal) {
    BCF_REQUIRE(std::isfinite(start.x) && std::isfinite(start.y) && std::isfinite(start.theta) && goal.allFinite(),
                "nav reset: pose and goal must be finite");
    pose_ = start;
    pose_.theta = wrap_angle(pose_.theta);
    goal_ = goal;
    prev_action_.setZero();
    steps_ = 0;
    done_ = false;
    started_ = true;
    return observe();
}

Observation NavWorld::observe() const {
    Observation o;
    o.lidar = lidar_scan(segments_, pose_, config_);
    const Eigen::Vector2d d = goal_ - Eigen::Vector2d(pose_.x, pose_.y);
    const double c = std::cos(pose_.theta), s = std::sin(pose_.theta);
    o.goal_error = Eigen::Vector2d(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
    o.prev_action = prev_action_;
    return o;
}

double NavWorld::distance_to_goal() const { return (goal_ - Eigen::Vector2d(pose_.x, pose_.y)).norm(); }

bool NavWorld::in_collision() const {
    return clearance(arena_, segments_, {pose_.x, pose_.y}) < config_.robot_radius;
}

StepResult NavWorld::step(const Eigen::Vector2d& action) {
    BCF_REQUIRE(started_, "nav step: world has not been reset");
    BCF_REQUIRE(!done_, "nav step: episode is already done");
    BCF_REQUIRE(action.allFinite(), "nav step: action must be finite");
    const Eigen::Vector2d a = action.cwiseMax(-1.0).cwiseMin(1.0);
    const double v = a[0] * config_.v_max;
    const double w = a[1] * config_.w_max;
    pose_.x += v * std::cos(pose_.theta) * config_.dt;
    pose_.y += v * std::sin(pose_.theta) * config_.dt;
    pose_.theta = wrap_angle(pose_.theta + w * config_.dt);
    prev_action_ = a;
    ++steps_;

    StepResult r;
    r.info.distance_to_goal = distance_to_goal();
    r.info.goal_reached = r.info.distance_to_goal < config_.d_threshold;
    r.info.collision = in_collision();
    r.reward = r.info.goal_reached ? 1.0 : 0.0;
    r.done = r.info.collision || steps_ >= config_.horizon;
    done_ = r.done;
    r.observation = observe();
    return r;
}

Eigen::VectorXd sample_observation(std::mt19937_64& rng, const NavConfig& config) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Observation o;
    // Mostly open space with an occasional close return.
    for (int i = 0; i < kLidarBins; ++i) {
        const double u = unit(rng);
        o.lidar[i] = u < 0.3 ? 0.2 + 1.0 * unit(rng) : 0.8 + (config.max_range - 0.8) * unit(rng);
    }
    const double dist = 4.0 * std::sqrt(unit(rng));
    const double bearing = -M_PI + 2 * M_PI * unit(rng);
    o.goal_error = Eigen::Vector2d(dist * std::cos(bearing), dist * std::sin(bearing));
    o.prev_action = Eigen::Vector2d(2 * unit(rng) - 1, 2 * unit(rng) - 1);
    return o.to_vector();
}

}  // namespace bcf::nav
