#include "selfloop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "selfloop/error.hpp"

namespace selfloop {

namespace {

constexpr double kRateFloor = 1e-6;
constexpr double kFidSlack = 1e-6;

void require_real_test(const Dataset& test, const char* where) {
    if (test.empty()) {
        throw Error(Errc::empty_input, std::string(where) + " requires a nonempty test set");
    }
    for (const Sample& s : test.samples) {
        if (!s.is_real()) {
            throw Error(Errc::provenance, std::string(where) + " requires an all-real test set");
        }
    }
}

double pair_mean(const Vector& tpr, double (*term)(double, double)) {
    const std::size_t g = tpr.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = i + 1; j < g; ++j) sum += term(tpr[i], tpr[j]);
    }
    const double pairs = 0.5 * static_cast<double>(g) * static_cast<double>(g - 1);
    return sum / pairs;
}

std::size_t checked_subgroup(const Sample& s, std::size_t groups) {
    if (s.subgroup < 0 || static_cast<std::size_t>(s.subgroup) >= groups) {
        throw Error(Errc::shape,
                    "sample subgroup " + std::to_string(s.subgroup) + " outside schema range");
    }
    return static_cast<std::size_t>(s.subgroup);
}

}  // namespace

void GenerationRecord::validate() const {
    if (generation < 0) throw Error(Errc::validation, "record generation must be >= 0");
    if (!(fid >= 0.0)) throw Error(Errc::validation, "record fid must be >= 0");
    if (!(md >= 0.0) || !(md <= 1.0)) throw Error(Errc::validation, "record md must be in [0, 1]");
    for (std::size_t k = 1; k < rank_acc.size(); ++k) {
        if (rank_acc[k] < rank_acc[k - 1]) {
            throw Error(Errc::validation, "record rank accuracies must be non-decreasing");
        }
    }
    if (rates.num_subgroups() > 0 && std::abs(md - max_disparity(rates)) > 1e-12) {
        throw Error(Errc::validation, "record md does not match its subgroup rates");
    }
}

double accuracy(const ClassifierModel& model, const Dataset& test) {
    require_real_test(test, "accuracy");
    std::size_t hits = 0;
    for (const Sample& s : test.samples) {
        if (predict_label(model, s.features) == s.class_label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

double fid_from_moments(const Vector& mean_real, const Matrix& cov_real, const Vector& mean_gen,
                        const Matrix& cov_gen) {
    if (mean_real.size() != mean_gen.size() || cov_real.rows() != cov_gen.rows() ||
        cov_real.rows() != mean_real.size()) {
        throw Error(Errc::shape, "fid moments have mismatched dimensions");
    }
    const Matrix root_real = psd_sqrt(cov_real);
    const Matrix inner = root_real * cov_gen * root_real;
    const Matrix cross = psd_sqrt(inner);
    double value = trace(cov_real) + trace(cov_gen) - 2.0 * trace(cross);
    for (std::size_t i = 0; i < mean_real.size(); ++i) {
        const double d = mean_real[i] - mean_gen[i];
        value += d * d;
    }
    if (value < -kFidSlack) {
        throw Error(Errc::domain, "fid evaluated below the negativity tolerance");
    }
    return value < 0.0 ? 0.0 : value;
}

double fid(const std::vector<Vector>& real_points, const std::vector<Vector>& gen_points) {
    if (real_points.empty() || gen_points.empty()) {
        throw Error(Errc::insufficient_data, "fid requires points on both sides");
    }
    const std::size_t dim = real_points.front().size();
    for (const Vector& p : real_points) {
        if (p.size() != dim) throw Error(Errc::shape, "fid real points have mixed dimensions");
    }
    for (const Vector& p : gen_points) {
        if (p.size() != dim) throw Error(Errc::shape, "fid point sets have mismatched dimensions");
    }
    if (real_points.size() < dim + 1 || gen_points.size() < dim + 1) {
        throw Error(Errc::insufficient_data,
                    "fid requires at least d+1 points per side, d = " + std::to_string(dim));
    }
    const MeanCov real_mc = mean_cov(real_points);
    const MeanCov gen_mc = mean_cov(gen_points);
    return fid_from_moments(real_mc.mean, real_mc.cov, gen_mc.mean, gen_mc.cov);
}

SubgroupRates subgroup_tpr(const ClassifierModel& model, const Dataset& test) {
    require_real_test(test, "subgroup_tpr");
    const std::size_t groups = test.schema.num_subgroups;
    SubgroupRates rates;
    rates.tpr = Vector(groups, 0.0);
    rates.counts.assign(groups, 0);
    std::vector<std::size_t> hits(groups, 0);
    for (const Sample& s : test.samples) {
        const std::size_t g = checked_subgroup(s, groups);
        ++rates.counts[g];
        if (predict_label(model, s.features) == s.class_label) ++hits[g];
    }
    for (std::size_t g = 0; g < groups; ++g) {
        if (rates.counts[g] == 0) {
            throw Error(Errc::empty_subgroup,
                        "subgroup " + std::to_string(g) + " has no test samples");
        }
        rates.tpr[g] = static_cast<double>(hits[g]) / static_cast<double>(rates.counts[g]);
    }
    return rates;
}

double equality_of_opportunity(const SubgroupRates& rates) {
    if (rates.tpr.empty()) throw Error(Errc::empty_input, "equality_of_opportunity needs G >= 1");
    if (rates.tpr.size() == 1) return 1.0;
    return 1.0 - pair_mean(rates.tpr, +[](double a, double b) { return std::abs(a - b); });
}

double disparate_impact(const SubgroupRates& rates, DiVariant variant, bool* clamped) {
    if (rates.tpr.empty()) throw Error(Errc::empty_input, "disparate_impact needs G >= 1");
    bool hit_floor = false;
    Vector safe = rates.tpr;
    for (double& r : safe) {
        if (r < kRateFloor) {
            r = kRateFloor;
            hit_floor = true;
        }
    }
    if (clamped != nullptr) *clamped = hit_floor;
    if (safe.size() == 1) return 1.0;
    const double mean =
        variant == DiVariant::directed
            ? pair_mean(safe, +[](double a, double b) { return std::abs(a / b - 1.0); })
            : pair_mean(safe, +[](double a, double b) {
                  return 0.5 * (std::abs(a / b - 1.0) + std::abs(b / a - 1.0));
              });
    return 1.0 - mean;
}

double max_disparity(const SubgroupRates& rates) {
    if (rates.tpr.empty()) throw Error(Errc::empty_input, "max_disparity needs G >= 1");
    double worst = 0.0;
    for (std::size_t i = 0; i < rates.tpr.size(); ++i) {
        for (std::size_t j = i + 1; j < rates.tpr.size(); ++j) {
            worst = std::max(worst, std::abs(rates.tpr[i] - rates.tpr[j]));
        }
    }
    return worst;
}

Vector subgroup_rank_accuracy(const ClassifierModel& model, const Dataset& test) {
    require_real_test(test, "subgroup_rank_accuracy");
    const std::size_t classes = test.schema.num_classes;
    const std::size_t groups = test.schema.num_subgroups;
    std::vector<std::vector<std::size_t>> total(classes, std::vector<std::size_t>(groups, 0));
    std::vector<std::vector<std::size_t>> hits(classes, std::vector<std::size_t>(groups, 0));
    for (const Sample& s : test.samples) {
        const auto c = static_cast<std::size_t>(s.class_label);
        const std::size_t g = checked_subgroup(s, groups);
        ++total[c][g];
        if (predict_label(model, s.features) == s.class_label) ++hits[c][g];
    }
    Vector ranks(groups, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        Vector cell(groups);
        for (std::size_t g = 0; g < groups; ++g) {
            if (total[c][g] == 0) {
                throw Error(Errc::empty_cell, "class " + std::to_string(c) + ", subgroup " +
                                                  std::to_string(g) + " has no test samples");
            }
            cell[g] = static_cast<double>(hits[c][g]) / static_cast<double>(total[c][g]);
        }
        std::stable_sort(cell.begin(), cell.end());
        for (std::size_t k = 0; k < groups; ++k) ranks[k] += cell[k];
    }
    for (double& r : ranks) r /= static_cast<double>(classes);
    return ranks;
}

GenerationRecord evaluate_generation(int generation, const ClassifierModel& model,
                                     const Dataset& test, double fid_value,
                                     DiVariant di_variant) {
    GenerationRecord rec;
    rec.generation = generation;
    rec.acc = accuracy(model, test);
    rec.fid = fid_value;
    rec.rates = subgroup_tpr(model, test);
    rec.eo = equality_of_opportunity(rec.rates);
    rec.di = disparate_impact(rec.rates, di_variant);
    rec.md = max_disparity(rec.rates);
    rec.rank_acc = subgroup_rank_accuracy(model, test);
    return rec;
}

}  // namespace selfloop
