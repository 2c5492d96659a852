#pragma once

// 2D PointGoal navigation: a unicycle robot with a forward 180 degree lidar
// binned into 15 sectors, a goal expressed in the robot frame, and a sparse
// reward. Episodes last 500 steps and do not end when the goal is reached.

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace bcf::nav {

constexpr int kLidarBins = 15;
constexpr int kStateDim = kLidarBins + 2 + 2;  // 19
constexpr int kActionDim = 2;                  // (linear, angular), normalised to [-1, 1]

using LidarBins = Eigen::Matrix<double, kLidarBins, 1>;

/// Centre angle (rad, robot frame, +ve to the left) of lidar bin i. Bin 0 is
/// the rightmost sector.
double bin_center_angle(int i);

/// Layout of the 19-wide observation: [lidar(15), goal error(2), previous action(2)].
/// The goal error is the goal position in the robot frame (x forward, y left), metres.
struct Observation {
    LidarBins lidar = LidarBins::Zero();
    Eigen::Vector2d goal_error = Eigen::Vector2d::Zero();
    Eigen::Vector2d prev_action = Eigen::Vector2d::Zero();

    Eigen::VectorXd to_vector() const;
    static Observation from_vector(const Eigen::VectorXd& s);
};

struct Segment {
    Eigen::Vector2d a;
    Eigen::Vector2d b;
};

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool contains(const Eigen::Vector2d& p) const { return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1; }
};

/// Arena file: {"walls":[[x1,y1,x2,y2],...], "boxes":[[cx,cy,w,h],...],
/// "start_region":[x0,y0,x1,y1], "goal_region":[x0,y0,x1,y1]} in metres, with
/// optional "name", "min_start_goal_distance" and "out_of_distribution".
struct Arena {
    std::string name;
    std::vector<Segment> walls;
    std::vector<Rect> boxes;  // stored as corners; serialised as centre/size
    Rect start_region;
    Rect goal_region;
    double min_start_goal_distance = 2.0;
    bool out_of_distribution = false;

    /// Walls plus the four edges of every box.
    std::vector<Segment> segments() const;
};

Arena arena_from_json(const nlohmann::json& j);
nlohmann::json arena_to_json(const Arena& arena);
Arena load_arena(const std::string& path);

/// Built-in arenas: "empty", "train_1".."train_5", "ood_corridor", "ood_clutter".
Arena builtin_arena(const std::string& name);
std::vector<std::string> builtin_arena_names();
/// Either a built-in name or a path to an arena JSON file.
Arena resolve_arena(const std::string& name_or_path);

struct NavConfig {
    double dt = 0.05;            // s
    double v_max = 0.25;         // m/s
    double w_max = 1.0;          // rad/s
    double robot_radius = 0.2;   // m
    double d_threshold = 0.3;    // m
    int horizon = 500;
    int lidar_rays = 180;
    double max_range = 5.0;      // m

    void validate() const;
};

struct Pose2 {
    double x = 0, y = 0, theta = 0;
};

/// Binned scan from `pose`: minimum range per 12 degree sector, capped at max_range.
LidarBins lidar_scan(const std::vector<Segment>& segments, const Pose2& pose, const NavConfig& config);

/// Clearance from the robot centre to the nearest obstacle surface; negative
/// when the centre is inside a box.
double clearance(const Arena& arena, const std::vector<Segment>& segments, const Eigen::Vector2d& p);

struct StepInfo {
    bool collision = false;
    bool goal_reached = false;
    double distance_to_goal = 0.0;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

class NavWorld {
public:
    NavWorld(Arena arena, NavConfig config = {});

    /// Samples start and goal in opposite end regions (randomly swapped),
    /// collision-free and at least min_start_goal_distance apart.
    Observation reset(std::mt19937_64& rng);

    /// Places the robot explicitly; used by scripted scenarios and tests.
    Observation reset_to(const Pose2& start, const Eigen::Vector2d& goal);

    StepResult step(const Eigen::Vector2d& action);

    Observation observe() const;

    const Arena& arena() const { return arena_; }
    const NavConfig& config() const { return config_; }
    const Pose2& pose() const { return pose_; }
    const Eigen::Vector2d& goal() const { return goal_; }
    int step_count() const { return steps_; }
    bool done() const { return done_; }
    double distance_to_goal() const;
    bool in_collision() const;

private:
    Arena arena_;
    NavConfig config_;
    std::vector<Segment> segments_;
    Pose2 pose_;
    Eigen::Vector2d goal_ = Eigen::Vector2d::Zero();
    Eigen::Vector2d prev_action_ = Eigen::Vector2d::Zero();
    int steps_ = 0;
    bool done_ = false;
    bool started_ = false;
};

/// Random, loosely plausible observations for fitting and region statistics.
Eigen::VectorXd sample_observation(std::mt19937_64& rng, const NavConfig& config = {});

}  // namespace bcf::nav
