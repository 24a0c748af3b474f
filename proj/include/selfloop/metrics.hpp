#pragma once

#include <cstddef>
#include <vector>

#include "selfloop/classifier.hpp"
#include "selfloop/numeric.hpp"
#include "selfloop/world.hpp"

namespace selfloop {

struct SubgroupRates {
    Vector tpr;                        // per-subgroup true-positive rate in [0, 1]
    std::vector<std::size_t> counts;   // per-subgroup test sample counts

    std::size_t num_subgroups() const { return tpr.size(); }
};

/// Pairwise ratio handling for disparate impact. The symmetric variant
/// averages both ratio directions per pair, which makes the score invariant
/// under subgroup relabeling; directed uses the raw i<j ratio only.
enum class DiVariant { symmetric, directed };

struct GenerationRecord {
    int generation = 0;
    double acc = 0.0;
    double fid = 0.0;
    double eo = 1.0;
    double di = 1.0;
    double md = 0.0;
    Vector rank_acc;      // ascending by rank
    SubgroupRates rates;

    void validate() const;
};

/// Fraction of test samples whose predicted label matches the truth.
double accuracy(const ClassifierModel& model, const Dataset& test);

/// Frechet distance between Gaussian fits of the two point clouds, in raw
/// feature space. Requires at least d+1 points per side.
double fid(const std::vector<Vector>& real_points, const std::vector<Vector>& gen_points);

/// Frechet distance from explicit Gaussian moments.
double fid_from_moments(const Vector& mean_real, const Matrix& cov_real, const Vector& mean_gen,
                        const Matrix& cov_gen);

/// Per-subgroup accuracy (true-positive rate conditioned on subgroup).
SubgroupRates subgroup_tpr(const ClassifierModel& model, const Dataset& test);

/// 1 minus the mean absolute pairwise TPR gap; 1 when all rates agree.
double equality_of_opportunity(const SubgroupRates& rates);

/// 1 minus the mean pairwise ratio deviation from 1. Rates are clamped to
/// >= 1e-6 before division; *clamped reports whether the floor engaged.
double disparate_impact(const SubgroupRates& rates, DiVariant variant = DiVariant::symmetric,
                        bool* clamped = nullptr);

/// Largest absolute pairwise TPR gap; 0 when all rates agree.
double max_disparity(const SubgroupRates& rates);

/// Per class, sort per-subgroup accuracies ascending, then average the
/// rank-k values across classes. Entry k is the mean accuracy of each
/// class's k-th worst subgroup.
Vector subgroup_rank_accuracy(const ClassifierModel& model, const Dataset& test);

/// Bundle the full metric suite for one generation; fid_value is computed
/// by the caller from the raw synthetic batch.
GenerationRecord evaluate_generation(int generation, const ClassifierModel& model,
                                     const Dataset& test, double fid_value,
                                     DiVariant di_variant = DiVariant::symmetric);

}  // namespace selfloop
