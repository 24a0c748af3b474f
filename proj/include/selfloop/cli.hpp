#pragma once

#include <cstddef>
#include <string>

namespace selfloop {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Run every configured seed, writing one metrics CSV per seed, an
/// aggregate CSV, and a run manifest into the output directory. out_dir
/// overrides the config's output_dir when non-empty. jobs bounds how many
/// seeds run concurrently. Throws Error; on config failure an error
/// manifest is left in the output directory when one is known.
void cmd_run(const std::string& config_path, const std::string& out_dir, std::size_t jobs);

/// Fit the bias recursion to a recorded metrics CSV. knobs_source is
/// either a JSON file ({"q":..,"u":..} or {"knobs":[{"q","u"},..]}) or the
/// literal "from-manifest" to read manifest.json beside the CSV.
/// bias_measure is "md" or "one-minus-eo".
void cmd_fit_dynamics(const std::string& metrics_csv, const std::string& knobs_source,
                      const std::string& out_json, const std::string& bias_measure);

/// Render the SVG charts and summary table for one metrics CSV.
void cmd_report(const std::string& metrics_csv, const std::string& out_dir);

}  // namespace selfloop
