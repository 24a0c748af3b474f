#include "selfloop/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfloop/config.hpp"
#include "selfloop/dynamics.hpp"
#include "selfloop/error.hpp"
#include "selfloop/loop.hpp"
#include "selfloop/report.hpp"

namespace selfloop {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::io, "cannot create " + dir + ": " + ec.message());
}

void apply_seed_override(ExperimentConfig& cfg) {
    const char* raw = std::getenv("SELFLOOP_SEED_OVERRIDE");
    if (raw == nullptr || *raw == '\0') return;
    char* end = nullptr;
    const unsigned long long value = std::strtoull(raw, &end, 10);
    if (end == raw || *end != '\0') {
        throw Error(Errc::validation, "SELFLOOP_SEED_OVERRIDE must be an unsigned integer");
    }
    cfg.seeds.assign(1, static_cast<std::uint64_t>(value));
}

void write_error_manifest(const std::string& out_dir, const Error& e) {
    if (out_dir.empty()) return;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) return;  // the original error is the one worth reporting
    json j;
    j["status"] = "error";
    j["error_code"] = errc_name(e.code());
    j["error"] = e.detail();
    j["library_version"] = kLibraryVersion;
    std::ofstream out(out_dir + "/error_manifest.json", std::ios::binary);
    if (out) out << j.dump(2) << "\n";
}

KnobTrajectory knobs_from_json(const json& root, std::size_t steps, const std::string& origin) {
    KnobTrajectory traj;
    if (root.is_object() && root.contains("q") && !root.contains("knobs")) {
        const double q = root.at("q").get<double>();
        const double u = root.value("u", 0.0);
        return KnobTrajectory::constant(q, u, steps);
    }
    if (!root.is_object() || !root.contains("knobs") || !root.at("knobs").is_array()) {
        throw Error(Errc::schema, origin + ": expected {\"q\",\"u\"} or a \"knobs\" array");
    }
    for (const json& item : root.at("knobs")) {
        SamplingKnobs k;
        k.q = item.at("q").get<double>();
        k.u = item.value("u", 0.0);
        traj.steps.push_back(k);
    }
    if (traj.steps.size() != steps) {
        throw Error(Errc::shape, origin + ": " + std::to_string(traj.steps.size()) +
                                     " knob entries for " + std::to_string(steps) + " steps");
    }
    traj.validate();
    return traj;
}

struct SeedOutcome {
    std::vector<GenerationRecord> records;
    std::exception_ptr failure;
};

}  // namespace

void cmd_run(const std::string& config_path, const std::string& out_dir, std::size_t jobs) {
    std::string resolved_out = out_dir;
    try {
        ExperimentConfig cfg = parse_config(read_file(config_path));
        apply_seed_override(cfg);
        if (resolved_out.empty()) resolved_out = cfg.output_dir;
        if (resolved_out.empty()) {
            throw Error(Errc::validation, "no output directory: pass --out or set output_dir");
        }
        ensure_directory(resolved_out);

        RandomSource world_rng(cfg.world_seed);
        const World world = build_world(cfg.world, world_rng);

        const auto started = std::chrono::steady_clock::now();
        std::vector<SeedOutcome> outcomes(cfg.seeds.size());
        std::atomic<std::size_t> next{0};
        const std::size_t workers = std::max<std::size_t>(
            1, std::min(jobs == 0 ? 1 : jobs, cfg.seeds.size()));

        auto run_one = [&](std::size_t index) {
            const std::uint64_t seed = cfg.seeds[index];
            try {
                const std::string csv_path =
                    resolved_out + "/metrics_seed" + std::to_string(seed) + ".csv";
                std::ofstream csv(csv_path, std::ios::binary);
                if (!csv) throw Error(Errc::io, "cannot write " + csv_path);
                csv << metrics_csv_header(cfg.world.num_subgroups) << "\n";
                const RecordSink sink = [&csv, &csv_path](const GenerationRecord& rec) {
                    csv << metrics_csv_row(rec) << "\n";
                    csv.flush();
                    if (!csv) throw Error(Errc::io, "failed while writing " + csv_path);
                };
                outcomes[index].records = run_loop(world, cfg.loop, seed, sink);
            } catch (const Error& e) {
                outcomes[index].failure = std::make_exception_ptr(
                    Error(e.code(), "seed " + std::to_string(seed) + ": " + e.detail()));
            } catch (...) {
                outcomes[index].failure = std::current_exception();
            }
        };

        if (workers == 1) {
            for (std::size_t i = 0; i < cfg.seeds.size(); ++i) run_one(i);
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&]() {
                    for (std::size_t i = next.fetch_add(1); i < cfg.seeds.size();
                         i = next.fetch_add(1)) {
                        run_one(i);
                    }
                });
            }
            for (std::thread& t : pool) t.join();
        }
        for (const SeedOutcome& outcome : outcomes) {
            if (outcome.failure) std::rethrow_exception(outcome.failure);
        }
        const double wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

        std::vector<std::vector<GenerationRecord>> per_seed;
        per_seed.reserve(outcomes.size());
        for (SeedOutcome& outcome : outcomes) per_seed.push_back(std::move(outcome.records));
        write_aggregate_csv(per_seed, resolved_out + "/aggregate.csv");

        json manifest;
        manifest["status"] = "ok";
        manifest["library_version"] = kLibraryVersion;
        manifest["config_hash"] = config_hash(cfg);
        manifest["config"] = json::parse(serialize_config(cfg));
        manifest["wall_clock_seconds"] = wall_seconds;
        manifest["seeds"] = cfg.seeds;
        json knobs = json::array();
        for (std::size_t t = 1; t <= cfg.loop.generations; ++t) {
            const SamplingKnobs k = cfg.loop.knobs_at(t);
            knobs.push_back({{"q", k.q}, {"u", k.u}});
        }
        manifest["knobs"] = std::move(knobs);
        json files = json::array();
        for (const std::uint64_t seed : cfg.seeds) {
            files.push_back("metrics_seed" + std::to_string(seed) + ".csv");
        }
        manifest["csv_files"] = std::move(files);
        std::ofstream mf(resolved_out + "/manifest.json", std::ios::binary);
        if (!mf) throw Error(Errc::io, "cannot write " + resolved_out + "/manifest.json");
        mf << manifest.dump(2) << "\n";
    } catch (const Error& e) {
        write_error_manifest(resolved_out, e);
        throw;
    }
}

void cmd_fit_dynamics(const std::string& metrics_csv, const std::string& knobs_source,
                      const std::string& out_json, const std::string& bias_measure) {
    BiasMeasure measure;
    if (bias_measure == "md") {
        measure = BiasMeasure::max_disparity;
    } else if (bias_measure == "one-minus-eo") {
        measure = BiasMeasure::one_minus_eo;
    } else {
        throw Error(Errc::validation, "bias measure must be \"md\" or \"one-minus-eo\"");
    }

    const MetricsTable table = read_metrics_csv(metrics_csv);
    const Vector series = bias_series(table.records, measure);
    const std::size_t steps = series.empty() ? 0 : series.size() - 1;

    json knobs_root;
    std::string origin;
    if (knobs_source == "from-manifest") {
        const fs::path manifest_path = fs::path(metrics_csv).parent_path() / "manifest.json";
        origin = manifest_path.string();
        try {
            knobs_root = json::parse(read_file(origin));
        } catch (const json::parse_error& e) {
            throw Error(Errc::parse, origin + ": " + e.what());
        }
    } else {
        origin = knobs_source;
        try {
            knobs_root = json::parse(read_file(knobs_source));
        } catch (const json::parse_error& e) {
            throw Error(Errc::parse, origin + ": " + e.what());
        }
    }
    KnobTrajectory knobs;
    try {
        knobs = knobs_from_json(knobs_root, steps, origin);
    } catch (const json::exception& e) {
        throw Error(Errc::schema, origin + ": " + e.what());
    }

    const DynamicsFit fit = fit_dynamics(series, knobs);
    std::ofstream out(out_json, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + out_json);
    out << dynamics_fit_to_json(fit) << "\n";
    if (!out) throw Error(Errc::io, "failed while writing " + out_json);
    std::cout << "residual_rms=" << format_double(fit.residual_rms)
              << " knobs_constant=" << (fit.knobs_constant ? "true" : "false") << "\n";
}

void cmd_report(const std::string& metrics_csv, const std::string& out_dir) {
    const MetricsTable table = read_metrics_csv(metrics_csv);
    write_report(table, out_dir);
}

}  // namespace selfloop
