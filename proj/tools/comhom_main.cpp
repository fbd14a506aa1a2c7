#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "comhom/audit.hpp"
#include "comhom/config.hpp"
#include "comhom/dataset.hpp"
#include "comhom/error.hpp"
#include "comhom/log.hpp"
#include "comhom/runner.hpp"
#include "comhom/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

int cmd_synth_data(const std::string& spec_path, const std::string& out_dir) {
    const auto [spec, seed] = comhom::cfg::load_synth_spec(spec_path);
    const comhom::data::Dataset ds = comhom::data::generate_synth_cohort(spec, seed);
    comhom::data::save_dataset(ds, out_dir);
    std::printf("wrote %zu windows (%d subjects) to %s\n", ds.windows.size(), spec.subjects,
                out_dir.c_str());
    return kExitOk;
}

int cmd_run(const std::string& config_path, int jobs) {
    const comhom::cfg::ExperimentConfig config = comhom::cfg::load_experiment_config(config_path);
    const comhom::runner::RunOutcome outcome = comhom::runner::run_experiment(config, jobs);
    const std::size_t total = outcome.failures.size() + static_cast<std::size_t>(outcome.completed);
    std::printf("completed %d/%zu runs, reports under %s\n", outcome.completed, total,
                config.out_dir.c_str());
    for (const std::string& f : outcome.failures) std::printf("failed: %s\n", f.c_str());
    return outcome.failures.empty() ? kExitOk : kExitRunFailure;
}

int cmd_report(const std::string& in_dir) {
    const int n = comhom::runner::aggregate_reports(in_dir);
    std::printf("aggregated %d reports into %s/aggregate\n", n, in_dir.c_str());
    return kExitOk;
}

int cmd_grad_check(std::uint64_t seed, int points) {
    const auto start = std::chrono::steady_clock::now();
    const comhom::audit::AuditReport report = comhom::audit::audit_autodiff(seed, points);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const comhom::audit::AuditCheck& c : report.checks) {
        std::printf("%-16s point %2d  max rel err %.3e  %s\n", c.name.c_str(), c.point,
                    c.max_rel_err, c.passed ? "ok" : "FAILED");
    }
    std::printf("%zu checks, max rel err %.3e, %.1fs: %s\n", report.checks.size(),
                report.max_rel_err, secs, report.passed ? "all gradients check out" : "FAILED");
    return report.passed ? kExitOk : kExitRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"combination-homomorphic gesture representation pipeline"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth-data", "generate a procedural cohort dataset");
    synth->add_option("--spec", spec_path, "cohort spec JSON")->required();
    synth->add_option("--out", synth_out, "output dataset directory")->required();

    std::string config_path;
    int jobs = 1;
    CLI::App* run = app.add_subcommand("run", "execute every (grid, fold, seed) run of a config");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_option("--jobs", jobs, "worker threads, one run each")->check(CLI::PositiveNumber);

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "re-aggregate the tables from existing reports");
    report->add_option("--in", report_dir, "experiment output directory")->required();

    std::uint64_t gc_seed = 0;
    int gc_points = 10;
    CLI::App* gc = app.add_subcommand("grad-check", "finite-difference audit of the autodiff core");
    gc->add_option("--seed", gc_seed, "random point seed");
    gc->add_option("--points", gc_points, "random parameter points per check")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;  // bad flags are config errors
    }

    try {
        if (synth->parsed()) return cmd_synth_data(spec_path, synth_out);
        if (run->parsed()) return cmd_run(config_path, jobs);
        if (report->parsed()) return cmd_report(report_dir);
        if (gc->parsed()) return cmd_grad_check(gc_seed, gc_points);
    } catch (const comhom::ConfigError& e) {
        comhom::log::error(std::string("config: ") + e.what());
        return kExitConfigError;
    } catch (const comhom::LoadError& e) {
        comhom::log::error(std::string("load: ") + e.what());
        return kExitConfigError;
    } catch (const std::exception& e) {
        comhom::log::error(e.what());
        return kExitRunFailure;
    }
    return kExitConfigError;  // unreachable with require_subcommand(1)
}
