#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "selfloop/numeric.hpp"
#include "selfloop/world.hpp"

namespace selfloop {

struct GaussianMixture {
    std::size_t components = 0;
    Vector weights;              // nonnegative, sum to 1, descending
    std::vector<Vector> means;
    std::vector<Matrix> covs;    // symmetric, min eigenvalue >= 1e-6

    void validate() const;
};

struct FitLog {
    double log_likelihood = 0.0;
    std::size_t iterations = 0;
    Vector ll_trace;  // log-likelihood after each iteration
};

struct GeneratorModel {
    std::vector<GaussianMixture> per_class;
    std::vector<FitLog> fit_log;
    DatasetSchema schema;
};

/// q is sample quality (1 = clean, lower adds isotropic noise); u is density
/// skew (0 = faithful, higher oversamples heavy mixture components and
/// concentrates within-component spread).
struct SamplingKnobs {
    double q = 1.0;
    double u = 0.0;

    void validate() const;
};

/// Mixture weights raised to the power 1+u and renormalized.
Vector skewed_weights(const Vector& weights, double u);

/// Expectation-maximization fit. Seeding: 10 k-means++ style candidate
/// initializations scored by initial log-likelihood, then one full EM run
/// from the best. Runs to relative log-likelihood change < 1e-6 or 100
/// iterations; covariances get +1e-6*I each M-step; components end sorted
/// by descending weight. Needs at least 5*K points.
GaussianMixture fit_gmm(const std::vector<Vector>& points, std::size_t components,
                        RandomSource& rng, FitLog* log = nullptr);

/// One independent fit_gmm per class over that class's features. Subgroup
/// labels are ignored; each class fits from its own forked RandomSource.
GeneratorModel fit_generator(const Dataset& pool, std::size_t components, RandomSource& rng);

/// Draw class_counts[c] samples per class. Component choice follows the
/// u-skewed weights, within-component covariance shrinks by 1/(1+u), and
/// (1-q)*noise_ref isotropic noise is added, where noise_ref is the root
/// mean diagonal of the unscaled component covariance. Samples carry
/// generation provenance and no subgroup label.
Dataset sample_generator(const GeneratorModel& gen, const std::vector<std::size_t>& class_counts,
                         const SamplingKnobs& knobs, int generation, RandomSource& rng);

std::string generator_to_json(const GeneratorModel& gen);
GeneratorModel generator_from_json(const std::string& text);

}  // namespace selfloop
