#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcf/errors.hpp"
#include "bcf/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct RunArgs {
    std::string task;
    std::vector<std::string> modes;
    std::string config;
    int episodes = -1;
    long long seed = -1;
    std::string out;
    int threads = -1;
    std::string selection;
};

int cmd_run(const RunArgs& a) {
    bcf::Task fallback = a.task.empty() ? bcf::Task::Nav : bcf::task_from_string(a.task);
    bcf::RunConfig config = a.config.empty() ? bcf::RunConfig::defaults(fallback) : bcf::load_run_config(a.config, fallback);
    if (!a.task.empty() && bcf::task_from_string(a.task) != config.task)
        throw bcf::ConfigError("--task disagrees with the config file");
    if (!a.modes.empty()) {
        config.modes.clear();
        for (const auto& m : a.modes) {
            if (m == "all") {
                config.modes = {bcf::Mode::PriorOnly, bcf::Mode::PolicyOnly, bcf::Mode::Bcf};
                break;
            }
            config.modes.push_back(bcf::mode_from_string(m));
        }
    }
    if (a.episodes >= 0) config.episodes = a.episodes;
    if (a.seed >= 0) config.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.out.empty()) config.output_dir = a.out;
    if (a.threads > 0) config.threads = a.threads;
    if (!a.selection.empty()) config.selection = bcf::selection_from_string(a.selection);
    if (a.config.empty() && !config.ensemble.configured())
        config.ensemble.surrogate = bcf::surrogate_spec_from_json(nlohmann::json::object(), config.task);
    config.validate();

    const bcf::RunSummary summary = bcf::run_suite(config);
    for (const auto& m : summary.modes) {
        std::printf("%-12s episodes=%d aborted=%d success=%.1f%% failure=%.1f%% steps_to_goal=%.1f\n",
                    bcf::to_string(m.mode), m.all.count, m.all.aborted, m.all.success_rate, m.all.failure_rate,
                    m.all.steps_to_goal.mean);
    }
    std::printf("wrote %s\n", config.output_dir.c_str());
    int aborted = 0;
    for (const auto& m : summary.modes) aborted += m.all.aborted;
    return aborted > 0 ? kRuntime : kOk;
}

int cmd_verify(const std::string& dir) {
    const bcf::VerifyReport report = bcf::verify_run(dir);
    for (const auto& issue : report.issues) std::printf("MISMATCH %s\n", issue.c_str());
    std::printf("%s: %d files, %d rows checked, %zu issues\n", report.ok() ? "clean" : "dirty", report.files_checked,
                report.rows_checked, report.issues.size());
    return report.ok() ? kOk : kValidation;
}

int cmd_plot(const std::string& dir) {
    const auto files = bcf::emit_plots(dir);
    std::printf("wrote %zu plots under %s/plots\n", files.size(), dir.c_str());
    return kOk;
}

struct SurrogateArgs {
    std::string task = "nav";
    std::string spec;
    std::string out;
    int samples = 4000;
    std::vector<int> hidden = {64, 64};
    long long seed = 7;
};

int cmd_make_surrogate(const SurrogateArgs& a) {
    const bcf::Task task = bcf::task_from_string(a.task);
    nlohmann::json j = nlohmann::json::object();
    if (!a.spec.empty()) {
        std::ifstream in(a.spec);
        if (!in) throw bcf::ConfigError("surrogate spec not found: " + a.spec);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw bcf::ConfigError("surrogate spec is not valid JSON: " + std::string(e.what()));
        }
    }
    const bcf::SurrogateSpec spec = bcf::surrogate_spec_from_json(j, task);
    const bcf::PolicyEnsemble teacher = bcf::build_surrogate_ensemble(spec);

    bcf::DistillOptions options;
    options.samples = a.samples;
    options.hidden = a.hidden;
    options.seed = static_cast<std::uint64_t>(a.seed);
    std::function<Eigen::VectorXd(std::mt19937_64&)> sampler;
    if (task == bcf::Task::Nav) {
        sampler = [](std::mt19937_64& rng) { return bcf::nav::sample_observation(rng); };
    } else {
        sampler = [](std::mt19937_64& rng) { return bcf::reacher::sample_observation(rng); };
    }
    bcf::DistillReport report;
    const bcf::PolicyEnsemble student = bcf::distill_to_mlp(teacher, sampler, options, &report);
    bcf::save_ensemble(student, a.out);
    for (size_t i = 0; i < report.mean_rmse.size(); ++i)
        std::printf("member %zu: mean rmse %.4g\n", i, report.mean_rmse[i]);
    std::printf("wrote %s (checksum %016llx)\n", a.out.c_str(),
                static_cast<unsigned long long>(bcf::parameter_checksum(student)));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian controller fusion experiments"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run episodes and write logs plus a summary");
    run_cmd->add_option("--task", run.task, "nav | reacher")->check(CLI::IsMember({"nav", "reacher"}));
    run_cmd->add_option("--mode", run.modes, "prior_only, policy_only, bcf or all (comma separated)")->delimiter(',');
    run_cmd->add_option("--config", run.config, "JSON run config")->check(CLI::ExistingFile);
    run_cmd->add_option("--episodes", run.episodes, "episode count");
    run_cmd->add_option("--seed", run.seed, "master seed");
    run_cmd->add_option("--out", run.out, "output directory");
    run_cmd->add_option("--threads", run.threads, "worker threads");
    run_cmd->add_option("--selection", run.selection, "sample | mode");

    std::string plot_dir;
    auto* plot_cmd = app.add_subcommand("plot", "Render SVG plots for a run directory");
    plot_cmd->add_option("--run", plot_dir, "run directory")->required();

    std::string verify_dir;
    auto* verify_cmd = app.add_subcommand("verify", "Recompute a run's summary from its logs");
    verify_cmd->add_option("--run", verify_dir, "run directory")->required();

    SurrogateArgs sur;
    auto* sur_cmd = app.add_subcommand("make-surrogate", "Write an ensemble weights file from a surrogate spec");
    sur_cmd->add_option("--task", sur.task, "nav | reacher")->check(CLI::IsMember({"nav", "reacher"}));
    sur_cmd->add_option("--spec", sur.spec, "surrogate spec JSON (defaults per task when omitted)");
    sur_cmd->add_option("--out", sur.out, "weights file")->required();
    sur_cmd->add_option("--samples", sur.samples, "fitting states per member");
    sur_cmd->add_option("--hidden", sur.hidden, "hidden layer widths")->delimiter(',');
    sur_cmd->add_option("--seed", sur.seed, "distillation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*plot_cmd) return cmd_plot(plot_dir);
        if (*verify_cmd) return cmd_verify(verify_dir);
        if (*sur_cmd) return cmd_make_surrogate(sur);
    } catch (const bcf::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kValidation;
    } catch (const bcf::ContractViolation& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kValidation;
    } catch (const bcf::EnsembleLoadError& e) {
        std::fprintf(stderr, "error (%s): %s\n", bcf::to_string(e.kind()), e.what());
        return kValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return kRuntime;
    }
    return kOk;
}
