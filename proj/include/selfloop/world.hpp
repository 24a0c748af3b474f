#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "selfloop/numeric.hpp"

namespace selfloop {

/// Spec of the synthetic ground truth: one Gaussian component per
/// (class, subgroup) cell. The subgroup attribute is a single global
/// attribute with G values cutting across all classes; bias is injected
/// through non-uniform subgroup_proportions rows.
struct WorldSpec {
    std::size_t num_classes = 2;
    std::size_t num_subgroups = 1;
    std::size_t feature_dim = 2;
    double class_separation = 6.0;
    double subgroup_offset = 2.0;
    double noise_scale = 1.0;
    /// num_classes rows of num_subgroups nonnegative entries, each row
    /// summing to 1.
    std::vector<std::vector<double>> subgroup_proportions;

    static std::vector<std::vector<double>> uniform_proportions(std::size_t classes,
                                                                std::size_t subgroups);
    void validate() const;
};

struct World {
    WorldSpec spec;
    std::vector<std::vector<Vector>> component_means;  // [class][subgroup]
    std::vector<std::vector<Matrix>> component_covs;
    std::vector<std::vector<Matrix>> component_sqrts;  // psd_sqrt cache for sampling
};

constexpr int kUnknownSubgroup = -1;
constexpr int kRealOrigin = 0;

struct Sample {
    Vector features;
    int class_label = 0;
    /// Subgroup attribute; kUnknownSubgroup for generated samples.
    int subgroup = kUnknownSubgroup;
    /// kRealOrigin for real data, otherwise the generation index t >= 1.
    int origin = kRealOrigin;
    /// Runtime identity used for pool/test disjointness checks; not exported.
    std::uint64_t id = 0;

    bool is_real() const noexcept { return origin == kRealOrigin; }
};

struct DatasetSchema {
    std::size_t num_classes = 0;
    std::size_t num_subgroups = 0;
    std::size_t feature_dim = 0;

    bool operator==(const DatasetSchema&) const = default;
};

struct Dataset {
    std::vector<Sample> samples;
    DatasetSchema schema;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    void validate() const;
};

/// Draws class mean clusters at pairwise distance >= class_separation
/// (rejection-resampled, 1000 attempts per class), offsets each subgroup
/// mean from its class center by subgroup_offset in a random direction,
/// and perturbs each covariance noise_scale^2*I by a random PSD term of
/// relative spectral magnitude <= 0.2.
///
/// Per-subgroup draws are consumed in descending-proportion order (ties by
/// index), so permuting a class's subgroup proportions relabels the world
/// rather than reshuffling its randomness.
World build_world(const WorldSpec& spec, RandomSource& rng);

/// Classes drawn uniformly, subgroup within class c from
/// subgroup_proportions[c], features from the (c,g) Gaussian. All samples
/// carry Real provenance and id 0.
Dataset sample_dataset(const World& world, std::size_t n, RandomSource& rng);

/// Assigns ids start, start+1, ... and returns the next free id.
std::uint64_t assign_sample_ids(Dataset& dataset, std::uint64_t start);

/// CSV with header f0..f{d-1},y,g,provenance; g = -1 for unknown,
/// provenance "real" or "gen<t>".
void write_dataset_csv(const Dataset& dataset, std::ostream& out);
void write_dataset_csv(const Dataset& dataset, const std::string& path);
Dataset read_dataset_csv(std::istream& in, const DatasetSchema& schema);
Dataset read_dataset_csv(const std::string& path, const DatasetSchema& schema);

/// Fixed float formatting used by every CSV writer (17 significant digits,
/// round-trippable, byte-stable under reruns).
std::string format_double(double value);

}  // namespace selfloop
