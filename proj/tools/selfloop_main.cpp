#include <algorithm>
#include <cstddef>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "selfloop/cli.hpp"
#include "selfloop/error.hpp"

namespace {

std::string one_line(std::string text) {
    std::replace(text.begin(), text.end(), '\n', ' ');
    std::replace(text.begin(), text.end(), '\r', ' ');
    return text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-consuming training loop simulator"};
    app.set_version_flag("--version", selfloop::kLibraryVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::size_t jobs = 1;
    CLI::App* run = app.add_subcommand("run", "Run the configured multi-seed experiment");
    run->add_option("--config", config_path, "Experiment config JSON")->required();
    run->add_option("--out", out_dir, "Output directory (overrides config output_dir)");
    run->add_option("--jobs", jobs, "Concurrent seeds")->default_val(std::size_t{1});

    std::string metrics_csv;
    std::string knobs_source;
    std::string fit_out;
    std::string bias_measure = "md";
    CLI::App* fit = app.add_subcommand("fit-dynamics", "Fit the bias recursion to a metrics CSV");
    fit->add_option("--metrics", metrics_csv, "Metrics CSV from a run")->required();
    fit->add_option("--knobs", knobs_source, "Knobs JSON path or 'from-manifest'")->required();
    fit->add_option("--out", fit_out, "Fit report JSON path")->required();
    fit->add_option("--bias-measure", bias_measure, "md or one-minus-eo");

    std::string report_csv;
    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "Render SVG charts and a summary table");
    report->add_option("--metrics", report_csv, "Metrics CSV from a run")->required();
    report->add_option("--out", report_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
        if (run->parsed()) selfloop::cmd_run(config_path, out_dir, jobs);
        if (fit->parsed()) {
            selfloop::cmd_fit_dynamics(metrics_csv, knobs_source, fit_out, bias_measure);
        }
        if (report->parsed()) selfloop::cmd_report(report_csv, report_dir);
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
    } catch (const selfloop::Error& e) {
        std::cerr << "error: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
}
