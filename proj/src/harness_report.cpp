#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bcf/harness.hpp"

namespace bcf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt JSON in " + path.string() + ": " + e.what());
    }
}

bool close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

void diff_json(const json& stored, const json& recomputed, const std::string& path, std::vector<std::string>& issues) {
    if (stored.is_number() && recomputed.is_number()) {
        const double a = stored.get<double>(), b = recomputed.get<double>();
        if (!close(a, b, 1e-12))
            issues.push_back(path + ": stored " + stored.dump() + ", recomputed " + recomputed.dump());
        return;
    }
    if (stored.is_object() && recomputed.is_object()) {
        for (const auto& [k, v] : recomputed.items()) {
            if (!stored.contains(k)) {
                issues.push_back(path + "." + k + ": missing from stored summary");
                continue;
            }
            diff_json(stored.at(k), v, path + "." + k, issues);
        }
        return;
    }
    if (stored != recomputed)
        issues.push_back(path + ": stored " + stored.dump() + ", recomputed " + recomputed.dump());
}

std::string row_issue(const std::string& file, size_t row, const std::string& what) {
    return file + ": row " + std::to_string(row) + " " + what;
}

void check_rows(Mode mode, const std::vector<StepRow>& rows, const std::string& file,
                std::vector<std::string>& issues) {
    for (size_t i = 0; i < rows.size(); ++i) {
        const StepRow& r = rows[i];
        switch (mode) {
            case Mode::Bcf: {
                if (!r.policy || !r.prior) {
                    issues.push_back(row_issue(file, i, "lacks the policy or prior distribution"));
                    break;
                }
                const auto expect = fuse(*r.policy, *r.prior);
                for (Eigen::Index d = 0; d < expect.size(); ++d) {
                    if (!close(expect.mean()[d], r.fused.mean()[d], 1e-9) ||
                        !close(expect.stddev()[d], r.fused.stddev()[d], 1e-9)) {
                        issues.push_back(row_issue(file, i, "fused moments differ from the recomputed product"));
                        break;
                    }
                }
                break;
            }
            case Mode::PolicyOnly:
                if (!r.policy || !(*r.policy == r.fused))
                    issues.push_back(row_issue(file, i, "executed distribution differs from the policy"));
                break;
            case Mode::PriorOnly:
                if (!r.prior || !(*r.prior == r.fused))
                    issues.push_back(row_issue(file, i, "executed distribution differs from the prior"));
                break;
        }
    }
}

// Five-stop viridis approximation.
std::string colour(double t) {
    static const std::array<std::array<double, 3>, 5> stops = {{{68, 1, 84}, {59, 82, 139}, {33, 145, 140},
                                                                {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int i = std::min(static_cast<int>(t), 3);
    const double f = t - i;
    char buf[8];
    int c[3];
    for (int k = 0; k < 3; ++k) c[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
    return buf;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string nav_svg(const nav::Arena& arena, const std::vector<StepRow>& rows, double d_threshold) {
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    auto grow = [&](double x, double y) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
    };
    for (const auto& s : arena.segments()) {
        grow(s.a.x(), s.a.y());
        grow(s.b.x(), s.b.y());
    }
    for (const auto& r : rows) {
        grow(r.x, r.y);
        grow(r.x_next, r.y_next);
    }
    if (x0 > x1) x0 = y0 = 0, x1 = y1 = 1;
    const double scale = 100.0, margin = 20.0;
    const double w = (x1 - x0) * scale + 2 * margin, h = (y1 - y0) * scale + 2 * margin + 30;
    auto px = [&](double x) { return num((x - x0) * scale + margin); };
    auto py = [&](double y) { return num((y1 - y) * scale + margin); };

    double lo = 1e300, hi = -1e300;
    for (const auto& r : rows)
        if (r.policy) {
            lo = std::min(lo, r.policy->stddev()[0]);
            hi = std::max(hi, r.policy->stddev()[0]);
        }
    const bool have_std = lo <= hi;

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
                    "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& b : arena.boxes)
        s += "<rect x=\"" + px(b.x0) + "\" y=\"" + py(b.y1) + "\" width=\"" + num((b.x1 - b.x0) * scale) +
             "\" height=\"" + num((b.y1 - b.y0) * scale) + "\" fill=\"#bbbbbb\" stroke=\"black\"/>\n";
    for (const auto& seg : arena.walls)
        s += "<line x1=\"" + px(seg.a.x()) + "\" y1=\"" + py(seg.a.y()) + "\" x2=\"" + px(seg.b.x()) + "\" y2=\"" +
             py(seg.b.y()) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    if (!rows.empty()) {
        const auto& first = rows.front();
        nav::Observation o = nav::Observation::from_vector(first.state);
        const double c = std::cos(first.theta), sn = std::sin(first.theta);
        const double gx = first.x + c * o.goal_error.x() - sn * o.goal_error.y();
        const double gy = first.y + sn * o.goal_error.x() + c * o.goal_error.y();
        s += "<circle cx=\"" + px(gx) + "\" cy=\"" + py(gy) + "\" r=\"" + num(d_threshold * scale) +
             "\" fill=\"none\" stroke=\"#d62728\" stroke-dasharray=\"4 2\"/>\n";
        s += "<circle cx=\"" + px(first.x) + "\" cy=\"" + py(first.y) + "\" r=\"4\" fill=\"black\"/>\n";
    }
    for (const auto& r : rows) {
        double t = 0.5;
        if (have_std && r.policy && hi - lo > 1e-12) t = (r.policy->stddev()[0] - lo) / (hi - lo);
        const std::string stroke = (have_std && r.policy) ? colour(t) : std::string("#1f77b4");
        s += "<line x1=\"" + px(r.x) + "\" y1=\"" + py(r.y) + "\" x2=\"" + px(r.x_next) + "\" y2=\"" + py(r.y_next) +
             "\" stroke=\"" + stroke + "\" stroke-width=\"3\"/>\n";
    }
    std::string legend = have_std ? "policy std (linear): " + num(lo) + " to " + num(hi) : "no policy std logged";
    s += "<text x=\"" + num(margin) + "\" y=\"" + num(h - 10) + "\" font-size=\"12\">" + legend + "</text>\n";
    s += "</svg>\n";
    return s;
}

std::string polyline(const std::vector<double>& ys, double left, double top, double width, double height,
                     const std::string& stroke) {
    double lo = 1e300, hi = -1e300;
    for (double y : ys) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    if (!(hi > lo)) hi = lo + 1.0;
    const double n = std::max<double>(1.0, static_cast<double>(ys.size()) - 1.0);
    std::string pts;
    for (size_t i = 0; i < ys.size(); ++i) {
        if (i) pts += ' ';
        pts += num(left + width * static_cast<double>(i) / n) + "," + num(top + height * (1.0 - (ys[i] - lo) / (hi - lo)));
    }
    std::string s = "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(width) + "\" height=\"" +
                    num(height) + "\" fill=\"none\" stroke=\"#888888\"/>\n";
    s += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + num(left + width + 5) + "\" y=\"" + num(top + 10) + "\" font-size=\"11\">" + num(hi) + "</text>\n";
    s += "<text x=\"" + num(left + width + 5) + "\" y=\"" + num(top + height) + "\" font-size=\"11\">" + num(lo) +
         "</text>\n";
    return s;
}

std::string reacher_svg(const std::vector<StepRow>& rows) {
    std::vector<double> m, sd;
    for (const auto& r : rows) {
        m.push_back(r.manipulability);
        if (r.policy) sd.push_back(r.policy->stddev().mean());
    }
    std::string s =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"480\" viewBox=\"0 0 800 480\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"60\" y=\"25\" font-size=\"13\">manipulability m(t)</text>\n";
    s += polyline(m, 60, 35, 660, 170, "#1f77b4");
    s += "<text x=\"60\" y=\"255\" font-size=\"13\">mean policy std</text>\n";
    if (!sd.empty()) s += polyline(sd, 60, 265, 660, 170, "#d62728");
    else s += "<text x=\"60\" y=\"350\" font-size=\"12\">no policy std logged</text>\n";
    s += "</svg>\n";
    return s;
}

Task summary_task(const json& summary) { return task_from_string(summary.at("task").get<std::string>()); }

}  // namespace

VerifyReport verify_run(const std::string& run_dir) {
    VerifyReport report;
    const fs::path dir(run_dir);
    json summary;
    try {
        summary = read_json(dir / "summary.json");
    } catch (const std::exception& e) {
        report.issues.push_back(e.what());
        return report;
    }
    try {
        const Task task = summary_task(summary);
        const Eigen::Index sd = summary.at("state_dim").get<Eigen::Index>();
        const Eigen::Index ad = summary.at("action_dim").get<Eigen::Index>();
        const double dt = summary.at("dt").get<double>();
        const int horizon = summary.at("horizon").get<int>();
        for (const auto& [mode_name, mode_json] : summary.at("modes").items()) {
            const Mode mode = mode_from_string(mode_name);
            const std::string base = "modes." + mode_name;
            std::vector<EpisodeMetrics> all, in, out;
            const json& episodes = mode_json.at("episodes");
            for (size_t k = 0; k < episodes.size(); ++k) {
                const json& e = episodes[k];
                const std::string file = e.at("file").get<std::string>();
                EpisodeLog log;
                log.task = task;
                log.mode = mode;
                log.episode = e.at("index").get<int>();
                log.out_of_distribution = e.at("split").get<std::string>() == "out_of_distribution";
                if (!e.at("error").is_null()) log.error = e.at("error").get<std::string>();
                try {
                    log.rows = rows_from_csv(read_text(dir / file), task, sd, ad);
                } catch (const std::exception& ex) {
                    report.issues.push_back(file + ": " + ex.what());
                    continue;
                }
                ++report.files_checked;
                report.rows_checked += static_cast<int>(log.rows.size());
                check_rows(mode, log.rows, file, report.issues);
                if (task == Task::Reacher && !log.rows.empty()) {
                    const auto obs = reacher::Observation::from_vector(log.rows.front().state);
                    if (reacher::goal_in_distribution(obs.goal()) == log.out_of_distribution)
                        report.issues.push_back(base + ".episodes[" + std::to_string(k) + "].split: inconsistent with the logged goal");
                }
                const EpisodeMetrics m = compute_metrics(log, dt, horizon);
                diff_json(e.at("metrics"), metrics_to_json(m, task), base + ".episodes[" + std::to_string(k) + "].metrics",
                          report.issues);
                all.push_back(m);
                (log.out_of_distribution ? out : in).push_back(m);
            }
            diff_json(mode_json.at("aggregate"), aggregate_to_json(aggregate(all), task), base + ".aggregate", report.issues);
            diff_json(mode_json.at("splits").at("in_distribution"), aggregate_to_json(aggregate(in), task),
                      base + ".splits.in_distribution", report.issues);
            diff_json(mode_json.at("splits").at("out_of_distribution"), aggregate_to_json(aggregate(out), task),
                      base + ".splits.out_of_distribution", report.issues);
        }
    } catch (const std::exception& e) {
        report.issues.push_back(std::string("summary.json is malformed: ") + e.what());
    }
    return report;
}

std::vector<std::string> emit_plots(const std::string& run_dir) {
    const fs::path dir(run_dir);
    const json summary = read_json(dir / "summary.json");
    const Task task = summary_task(summary);
    const Eigen::Index sd = summary.at("state_dim").get<Eigen::Index>();
    const Eigen::Index ad = summary.at("action_dim").get<Eigen::Index>();
    fs::create_directories(dir / "plots");
    std::vector<std::string> written;
    for (const auto& [mode_name, mode_json] : summary.at("modes").items()) {
        for (const auto& e : mode_json.at("episodes")) {
            const std::string file = e.at("file").get<std::string>();
            std::vector<StepRow> rows;
            try {
                rows = rows_from_csv(read_text(dir / file), task, sd, ad);
            } catch (const std::exception& ex) {
                throw std::runtime_error("cannot plot " + (dir / file).string() + ": " + ex.what());
            }
            std::string svg;
            if (task == Task::Nav) {
                const std::string name = e.at("arena").get<std::string>();
                const fs::path arena_file = dir / "arenas" / (name + ".json");
                const nav::Arena arena =
                    fs::exists(arena_file) ? nav::arena_from_json(read_json(arena_file)) : nav::resolve_arena(name);
                svg = nav_svg(arena, rows, summary.at("thresholds").at("d_threshold").get<double>());
            } else {
                svg = reacher_svg(rows);
            }
            char name[64];
            std::snprintf(name, sizeof name, "%s_episode_%04d.svg", mode_name.c_str(), e.at("index").get<int>());
            const fs::path out = dir / "plots" / name;
            std::ofstream os(out, std::ios::binary);
            if (!os) throw std::runtime_error("cannot write " + out.string());
            os << svg;
            written.push_back(out.string());
        }
    }
    return written;
}

ArbitrationStats arbitration_stats(const EpisodeLog& log) {
    ArbitrationStats st;
    for (const StepRow& r : log.rows) {
        if (!r.policy || !r.prior) continue;
        for (Eigen::Index d = 0; d < r.fused.size(); ++d) {
            const double mp = r.policy->mean()[d], sp = r.policy->stddev()[d];
            const double mq = r.prior->mean()[d], sq = r.prior->stddev()[d];
            const double gap = std::abs(mp - mq);
            // |mu_f - mu_prior| as a function of rho = sigma_policy / sigma_prior, means held fixed.
            auto distance = [gap](double rho) { return gap / (1.0 + rho * rho); };
            const double rho = sp / sq;
            const double here = distance(rho);
            if (std::abs(std::abs(r.fused.mean()[d] - mq) - here) > 1e-9 * std::max(1.0, gap) ||
                distance(rho * 1.1) > here || distance(rho / 1.1) < here)
                ++st.monotonicity_violations;
            if (sp > sq) {
                ++st.uncertain_steps;
                if (std::abs(r.action[d] - mq) / sq < std::abs(r.action[d] - mp) / sp) ++st.closer_to_prior;
            }
        }
    }
    return st;
}

}  // namespace bcf
