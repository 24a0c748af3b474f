#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfloop/loop.hpp"
#include "selfloop/world.hpp"

namespace selfloop {

struct ExperimentConfig {
    WorldSpec world;
    std::uint64_t world_seed = 20240101;  // one shared world across all run seeds
    LoopConfig loop;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;

    void validate() const;
};

/// Strict JSON parse: unknown keys are rejected, missing sections fall back
/// to documented defaults, every invalid value reports its key path.
ExperimentConfig parse_config(const std::string& text);

/// Canonical JSON form with every field explicit; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

/// FNV-1a 64-bit hash of the canonical form, as fixed-width hex.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace selfloop
