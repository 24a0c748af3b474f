#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfloop/cli.hpp"
#include "selfloop/dynamics.hpp"
#include "selfloop/error.hpp"
#include "selfloop/report.hpp"
#include "support/test_util.hpp"

using namespace selfloop;
namespace fs = std::filesystem;

namespace {

std::string cli() { return std::string("\"") + SELFLOOP_CLI_BINARY + "\""; }

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

std::string tiny_config(std::size_t generations, const std::string& seeds) {
    std::ostringstream cfg;
    cfg << R"({
  "world": {"num_classes": 2, "num_subgroups": 2, "feature_dim": 2,
            "class_separation": 6.0, "subgroup_offset": 1.0, "noise_scale": 1.0,
            "subgroup_proportions": [[0.6, 0.4], [0.5, 0.5]], "seed": 11},
  "dataset": {"n_train": 300, "n_test": 120},
  "loop": {"generations": )"
        << generations << R"(, "mix_ratio": 20, "filter_ratio": 10, "queue_capacity": 2,
           "gmm_components": 2, "train": {"max_epochs": 3, "batch_size": 64}},
  "seeds": )"
        << seeds << "\n}\n";
    return cfg.str();
}

testutil::CommandResult run_cli(const std::string& args) {
    return testutil::run_command(cli() + " " + args, "cli");
}

// Column-wise min/max scan of a metrics CSV, independent of the report code.
std::vector<std::string> summary_scan(const std::string& csv_text) {
    const auto lines = testutil::split_lines(csv_text);
    REQUIRE(lines.size() >= 2);
    std::vector<std::string> columns;
    {
        std::stringstream header(lines[0]);
        std::string name;
        while (std::getline(header, name, ',')) columns.push_back(name);
    }
    std::vector<std::string> rows;
    rows.emplace_back("column min max");
    for (std::size_t col = 1; col < columns.size(); ++col) {
        double lo = 0.0, hi = 0.0;
        for (std::size_t row = 1; row < lines.size(); ++row) {
            std::stringstream fields(lines[row]);
            std::string field;
            for (std::size_t i = 0; i <= col; ++i) REQUIRE(std::getline(fields, field, ','));
            const double v = std::stod(field);
            lo = row == 1 ? v : std::min(lo, v);
            hi = row == 1 ? v : std::max(hi, v);
        }
        rows.push_back(columns[col] + " " + format_double(lo) + " " + format_double(hi));
    }
    return rows;
}

GenerationRecord synthetic_record(int generation, double md) {
    GenerationRecord rec;
    rec.generation = generation;
    rec.acc = 0.9;
    rec.fid = 0.0;
    rec.eo = 1.0 - md;
    rec.di = 0.8;
    rec.md = md;
    rec.rank_acc = {0.9};
    rec.rates.tpr = {0.9};
    rec.rates.counts = {10};
    return rec;
}

void write_bias_csv(const fs::path& path, const Vector& bias) {
    std::ostringstream csv;
    csv << metrics_csv_header(1) << "\n";
    for (std::size_t t = 0; t < bias.size(); ++t) {
        csv << metrics_csv_row(synthetic_record(static_cast<int>(t), bias[t])) << "\n";
    }
    write_file(path, csv.str());
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run writes per-seed csvs, an aggregate, and a manifest") {
    const auto dir = testutil::fresh_temp_dir("cli_run");
    write_file(dir / "config.json", tiny_config(2, "[1, 2, 3]"));
    const auto result =
        run_cli("run --config " + (dir / "config.json").string() + " --out " +
                (dir / "out").string());
    INFO("stderr: ", result.err);
    REQUIRE(result.status == 0);

    const std::string expected_header =
        "generation,acc,fid,eo,di,md,rank_acc_1,rank_acc_2,tpr_0,tpr_1";
    for (const char* name : {"metrics_seed1.csv", "metrics_seed2.csv", "metrics_seed3.csv"}) {
        const auto lines = testutil::read_text_file(dir / "out" / name);
        const auto rows = testutil::split_lines(lines);
        INFO("file: ", name);
        REQUIRE(rows.size() == 4);
        CHECK(rows[0] == expected_header);
        CHECK(rows[1].rfind("0,", 0) == 0);
        CHECK(rows[3].rfind("2,", 0) == 0);
    }

    const auto aggregate = testutil::split_lines(testutil::read_text_file(dir / "out" / "aggregate.csv"));
    REQUIRE(aggregate.size() == 4);
    CHECK(aggregate[0].rfind("generation,acc_mean,acc_std,fid_mean,fid_std", 0) == 0);

    const auto manifest =
        nlohmann::json::parse(testutil::read_text_file(dir / "out" / "manifest.json"));
    CHECK(manifest.at("status") == "ok");
    CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
    CHECK(manifest.at("seeds") == nlohmann::json({1, 2, 3}));
    CHECK(manifest.at("knobs").size() == 2);
    CHECK(manifest.at("csv_files").size() == 3);
    fs::remove_all(dir);
}

TEST_CASE("rerun produces byte-identical per-seed csvs") {
    const auto dir = testutil::fresh_temp_dir("cli_rerun");
    write_file(dir / "config.json", tiny_config(2, "[5, 6]"));
    const std::string base =
        "run --config " + (dir / "config.json").string() + " --out ";
    REQUIRE(run_cli(base + (dir / "a").string()).status == 0);
    REQUIRE(run_cli(base + (dir / "b").string()).status == 0);
    for (const char* name : {"metrics_seed5.csv", "metrics_seed6.csv", "aggregate.csv"}) {
        INFO("file: ", name);
        const std::string a = testutil::read_text_file(dir / "a" / name);
        CHECK(a == testutil::read_text_file(dir / "b" / name));
        CHECK(!a.empty());
    }
    fs::remove_all(dir);
}

TEST_CASE("jobs flag does not change the outputs") {
    const auto dir = testutil::fresh_temp_dir("cli_jobs");
    write_file(dir / "config.json", tiny_config(1, "[7, 8]"));
    const std::string base =
        "run --config " + (dir / "config.json").string() + " --out ";
    REQUIRE(run_cli(base + (dir / "serial").string() + " --jobs 1").status == 0);
    REQUIRE(run_cli(base + (dir / "parallel").string() + " --jobs 2").status == 0);
    for (const char* name : {"metrics_seed7.csv", "metrics_seed8.csv", "aggregate.csv"}) {
        CHECK(testutil::read_text_file(dir / "serial" / name) ==
              testutil::read_text_file(dir / "parallel" / name));
    }
    fs::remove_all(dir);
}

TEST_CASE("seed override narrows the run to one seed") {
    const auto dir = testutil::fresh_temp_dir("cli_override");
    write_file(dir / "config.json", tiny_config(1, "[1, 2]"));
    const auto result = testutil::run_command(
        "SELFLOOP_SEED_OVERRIDE=42 " + cli() + " run --config " +
            (dir / "config.json").string() + " --out " + (dir / "out").string(),
        "cli");
    INFO("stderr: ", result.err);
    REQUIRE(result.status == 0);
    CHECK(fs::exists(dir / "out" / "metrics_seed42.csv"));
    CHECK(!fs::exists(dir / "out" / "metrics_seed1.csv"));
    const auto manifest =
        nlohmann::json::parse(testutil::read_text_file(dir / "out" / "manifest.json"));
    CHECK(manifest.at("seeds") == nlohmann::json({42}));

    const auto bad = testutil::run_command(
        "SELFLOOP_SEED_OVERRIDE=junk " + cli() + " run --config " +
            (dir / "config.json").string() + " --out " + (dir / "out2").string(),
        "cli");
    CHECK(bad.status != 0);
    CHECK(bad.err.find("error: validation:") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("invalid config leaves only an error manifest") {
    const auto dir = testutil::fresh_temp_dir("cli_badcfg");
    write_file(dir / "config.json", R"({"seeds": [1], "typo_key": 1})");
    const auto result =
        run_cli("run --config " + (dir / "config.json").string() + " --out " +
                (dir / "out").string());
    CHECK(result.status != 0);
    const auto err_lines = testutil::split_lines(result.err);
    REQUIRE(err_lines.size() == 1);
    CHECK(err_lines[0].rfind("error: schema: unknown key", 0) == 0);

    REQUIRE(fs::exists(dir / "out" / "error_manifest.json"));
    const auto manifest =
        nlohmann::json::parse(testutil::read_text_file(dir / "out" / "error_manifest.json"));
    CHECK(manifest.at("status") == "error");
    CHECK(manifest.at("error_code") == "schema");
    std::size_t csv_count = 0;
    for (const auto& entry : fs::directory_iterator(dir / "out")) {
        if (entry.path().extension() == ".csv") ++csv_count;
    }
    CHECK(csv_count == 0);
    fs::remove_all(dir);
}

TEST_CASE("missing config file is an io error") {
    const auto dir = testutil::fresh_temp_dir("cli_missing");
    const auto result = run_cli("run --config " + (dir / "absent.json").string() + " --out " +
                                (dir / "out").string());
    CHECK(result.status != 0);
    CHECK(result.err.rfind("error: io:", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("report renders five charts and a verifiable summary") {
    const auto dir = testutil::fresh_temp_dir("cli_report");
    write_file(dir / "config.json", tiny_config(2, "[1]"));
    REQUIRE(run_cli("run --config " + (dir / "config.json").string() + " --out " +
                    (dir / "out").string())
                .status == 0);
    const std::string csv = (dir / "out" / "metrics_seed1.csv").string();
    const auto result = run_cli("report --metrics " + csv + " --out " + (dir / "report").string());
    INFO("stderr: ", result.err);
    REQUIRE(result.status == 0);

    for (const char* name :
         {"accuracy.svg", "fid.svg", "fairness.svg", "rank_accuracy.svg", "tpr.svg"}) {
        INFO("file: ", name);
        const std::string svg = testutil::read_text_file(dir / "report" / name);
        CHECK(svg.rfind("<?xml", 0) == 0);
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("<polyline") != std::string::npos);
    }

    const auto summary =
        testutil::split_lines(testutil::read_text_file(dir / "report" / "summary.txt"));
    const auto expected = summary_scan(testutil::read_text_file(csv));
    REQUIRE(summary.size() == expected.size());
    for (std::size_t i = 0; i < summary.size(); ++i) CHECK(summary[i] == expected[i]);
    fs::remove_all(dir);
}

TEST_CASE("report rejects empty or malformed csvs") {
    const auto dir = testutil::fresh_temp_dir("cli_badcsv");
    write_file(dir / "empty.csv", metrics_csv_header(2) + "\n");
    auto result =
        run_cli("report --metrics " + (dir / "empty.csv").string() + " --out " +
                (dir / "r1").string());
    CHECK(result.status != 0);
    CHECK(result.err.rfind("error: empty-input:", 0) == 0);

    write_file(dir / "noschema.csv", "generation,acc,fid,eo,di,md\n0,1,0,1,1,0\n");
    result = run_cli("report --metrics " + (dir / "noschema.csv").string() + " --out " +
                     (dir / "r2").string());
    CHECK(result.status != 0);
    CHECK(result.err.rfind("error: schema:", 0) == 0);
    CHECK(result.err.find("rank_acc_1") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("fit-dynamics recovers a synthetic constant-knob trajectory") {
    const auto dir = testutil::fresh_temp_dir("cli_fit");
    DynamicsParams params;
    params.gamma_m = 0.1;
    params.delta_d = 0.05;
    params.delta_q = 0.2;
    params.delta_u = 0.1;
    params.b0 = 0.1;
    const KnobTrajectory knobs = KnobTrajectory::constant(0.8, 0.5, 10);
    write_bias_csv(dir / "metrics.csv", simulate_bias(params, knobs));
    write_file(dir / "knobs.json", R"({"q": 0.8, "u": 0.5})");

    const auto result = run_cli("fit-dynamics --metrics " + (dir / "metrics.csv").string() +
                                " --knobs " + (dir / "knobs.json").string() + " --out " +
                                (dir / "fit.json").string());
    INFO("stderr: ", result.err);
    REQUIRE(result.status == 0);
    CHECK(result.out.find("residual_rms=") != std::string::npos);
    CHECK(result.out.find("knobs_constant=true") != std::string::npos);

    const auto fit = nlohmann::json::parse(testutil::read_text_file(dir / "fit.json"));
    CHECK(fit.at("knobs_constant") == true);
    CHECK(fit.at("residual_rms").get<double>() < 1e-6);
    CHECK(fit.at("params").at("b0").get<double>() == doctest::Approx(0.1));
    for (const auto& a : fit.at("a")) {
        CHECK(a.get<double>() == doctest::Approx(1.026).epsilon(1e-6));
    }
    fs::remove_all(dir);
}

TEST_CASE("fit-dynamics tracks a varying knob schedule through the file layer") {
    const auto dir = testutil::fresh_temp_dir("cli_fit_varying");
    DynamicsParams params;
    params.gamma_m = 0.05;
    params.delta_d = 0.02;
    params.delta_q = 0.3;
    params.delta_u = 0.2;
    params.b0 = 0.05;
    KnobTrajectory knobs;
    nlohmann::json knob_json = nlohmann::json::array();
    for (std::size_t t = 0; t < 10; ++t) {
        SamplingKnobs k;
        k.q = t % 2 == 0 ? 0.6 : 1.0;
        k.u = static_cast<double>(t) / 9.0;
        knobs.steps.push_back(k);
        knob_json.push_back({{"q", k.q}, {"u", k.u}});
    }
    write_bias_csv(dir / "metrics.csv", simulate_bias(params, knobs));
    write_file(dir / "knobs.json", nlohmann::json({{"knobs", knob_json}}).dump());

    const auto result = run_cli("fit-dynamics --metrics " + (dir / "metrics.csv").string() +
                                " --knobs " + (dir / "knobs.json").string() + " --out " +
                                (dir / "fit.json").string());
    INFO("stderr: ", result.err);
    REQUIRE(result.status == 0);
    const auto fit = nlohmann::json::parse(testutil::read_text_file(dir / "fit.json"));
    CHECK(fit.at("knobs_constant") == false);
    const auto log_a = fit.at("log_a");
    REQUIRE(log_a.size() == 10);
    double sq = 0.0;
    for (std::size_t t = 0; t < 10; ++t) {
        const double truth = std::log(amplification_factor(params, knobs.steps[t].q, knobs.steps[t].u));
        const double diff = log_a[t].get<double>() - truth;
        sq += diff * diff;
    }
    CHECK(std::sqrt(sq / 10.0) < 1e-6);
    fs::remove_all(dir);
}

TEST_CASE("fit-dynamics reads knobs from the run manifest") {
    const auto dir = testutil::fresh_temp_dir("cli_fit_manifest");
    std::ostringstream cfg;
    cfg << R"({
  "world": {"num_classes": 2, "num_subgroups": 1, "feature_dim": 2, "subgroup_offset": 1.0},
  "dataset": {"n_train": 240, "n_test": 60},
  "loop": {"generations": 5, "mix_ratio": 20, "filter_ratio": 10,
           "train": {"max_epochs": 2, "batch_size": 64}, "knobs": {"q": 0.7, "u": 0.25}},
  "seeds": [9]
})";
    write_file(dir / "config.json", cfg.str());
    REQUIRE(run_cli("run --config " + (dir / "config.json").string() + " --out " +
                    (dir / "out").string())
                .status == 0);
    const auto result =
        run_cli("fit-dynamics --metrics " + (dir / "out" / "metrics_seed9.csv").string() +
                " --knobs from-manifest --out " + (dir / "fit.json").string());
    INFO("stderr: ", result.err);
    REQUIRE(result.status == 0);
    const auto fit = nlohmann::json::parse(testutil::read_text_file(dir / "fit.json"));
    CHECK(fit.at("knobs_constant") == true);
    CHECK(fit.at("log_a").size() == 5);
    fs::remove_all(dir);
}

TEST_CASE("fit-dynamics rejects short trajectories and bad flags") {
    const auto dir = testutil::fresh_temp_dir("cli_fit_bad");
    write_bias_csv(dir / "short.csv", {0.1, 0.11, 0.12});
    write_file(dir / "knobs.json", R"({"q": 1.0, "u": 0.0})");
    auto result = run_cli("fit-dynamics --metrics " + (dir / "short.csv").string() +
                          " --knobs " + (dir / "knobs.json").string() + " --out " +
                          (dir / "fit.json").string());
    CHECK(result.status != 0);
    CHECK(result.err.rfind("error: insufficient-trajectory:", 0) == 0);

    write_bias_csv(dir / "ok.csv", {0.1, 0.11, 0.12, 0.13, 0.14, 0.15});
    result = run_cli("fit-dynamics --metrics " + (dir / "ok.csv").string() + " --knobs " +
                     (dir / "knobs.json").string() + " --out " + (dir / "fit.json").string() +
                     " --bias-measure sideways");
    CHECK(result.status != 0);
    CHECK(result.err.rfind("error: validation:", 0) == 0);

    write_file(dir / "badknobs.json", R"({"steps": []})");
    result = run_cli("fit-dynamics --metrics " + (dir / "ok.csv").string() + " --knobs " +
                     (dir / "badknobs.json").string() + " --out " + (dir / "fit.json").string());
    CHECK(result.status != 0);
    CHECK(result.err.rfind("error: schema:", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("help and version exit zero") {
    CHECK(run_cli("--help").status == 0);
    const auto version = run_cli("--version");
    CHECK(version.status == 0);
    CHECK(version.out.find(kLibraryVersion) != std::string::npos);
    CHECK(run_cli("run --help").status == 0);
}

TEST_CASE("missing required options are usage errors") {
    const auto result = run_cli("run");
    CHECK(result.status != 0);
    CHECK(result.err.rfind("error: usage:", 0) == 0);
}

}  // TEST_SUITE("cli")

TEST_SUITE("cli.invariants") {

TEST_CASE("csv column order is fixed") {
    CHECK(metrics_csv_header(1) == "generation,acc,fid,eo,di,md,rank_acc_1,tpr_0");
    CHECK(metrics_csv_header(3) ==
          "generation,acc,fid,eo,di,md,rank_acc_1,rank_acc_2,rank_acc_3,tpr_0,tpr_1,tpr_2");
    const GenerationRecord rec = synthetic_record(4, 0.25);
    const auto fields = testutil::split_lines(metrics_csv_row(rec));
    REQUIRE(fields.size() == 1);
    CHECK(fields[0].rfind("4,", 0) == 0);
    std::size_t commas = 0;
    for (const char c : fields[0]) commas += c == ',' ? 1 : 0;
    CHECK(commas == 7);  // 8 columns for one subgroup
}

TEST_CASE("every failure exits nonzero with one machine-parsable line") {
    const auto dir = testutil::fresh_temp_dir("cli_discipline");
    write_file(dir / "bad_config.json", R"({"seeds": [1], "nope": true})");
    write_file(dir / "empty.csv", metrics_csv_header(1) + "\n");
    write_bias_csv(dir / "short.csv", {0.1, 0.2, 0.3});
    write_file(dir / "knobs.json", R"({"q": 1.0, "u": 0.0})");

    const std::vector<std::string> failing = {
        "run --config " + (dir / "bad_config.json").string() + " --out " + (dir / "o1").string(),
        "run --config " + (dir / "missing.json").string() + " --out " + (dir / "o2").string(),
        "report --metrics " + (dir / "empty.csv").string() + " --out " + (dir / "o3").string(),
        "fit-dynamics --metrics " + (dir / "short.csv").string() + " --knobs " +
            (dir / "knobs.json").string() + " --out " + (dir / "o4.json").string(),
    };
    for (const std::string& args : failing) {
        INFO("command: ", args);
        const auto result = run_cli(args);
        CHECK(result.status != 0);
        const auto lines = testutil::split_lines(result.err);
        REQUIRE(lines.size() == 1);
        CHECK(lines[0].rfind("error: ", 0) == 0);
    }

    write_file(dir / "config.json", tiny_config(1, "[3]"));
    const auto ok = run_cli("run --config " + (dir / "config.json").string() + " --out " +
                            (dir / "ok_out").string());
    CHECK(ok.status == 0);
    CHECK(ok.err.empty());
    fs::remove_all(dir);
}

}  // TEST_SUITE("cli.invariants")
