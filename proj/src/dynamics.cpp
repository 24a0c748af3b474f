#include "selfloop/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "selfloop/error.hpp"

namespace selfloop {

namespace {

constexpr double kBiasFloor = 1e-4;
constexpr double kGammaMax = 1.0 - 1e-6;
constexpr std::size_t kRestarts = 16;
constexpr std::size_t kMaxIterations = 5000;
constexpr double kInitialStep = 1e-2;
constexpr std::uint64_t kFitSeed = 0x5e1f100bu;

// theta = (gamma_m, delta_d, delta_q, delta_u)
using Theta = std::array<double, 4>;

Theta clip_box(Theta theta) {
    theta[0] = std::clamp(theta[0], 0.0, kGammaMax);
    for (std::size_t i = 1; i < 4; ++i) theta[i] = std::max(theta[i], 0.0);
    return theta;
}

double log_amplification(const Theta& theta, double q, double u) {
    const double inner = 1.0 + theta[1] + theta[2] * (1.0 - q) + theta[3] * u;
    return std::log(1.0 - theta[0]) + std::log(inner);
}

double objective(const Theta& theta, const Vector& y, const KnobTrajectory& knobs, Theta* grad) {
    if (grad != nullptr) grad->fill(0.0);
    double f = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const double q = knobs.steps[t].q;
        const double u = knobs.steps[t].u;
        const double inner = 1.0 + theta[1] + theta[2] * (1.0 - q) + theta[3] * u;
        const double r = y[t] - std::log(1.0 - theta[0]) - std::log(inner);
        f += r * r;
        if (grad == nullptr) continue;
        (*grad)[0] += -2.0 * r * (-1.0 / (1.0 - theta[0]));
        (*grad)[1] += -2.0 * r / inner;
        (*grad)[2] += -2.0 * r * (1.0 - q) / inner;
        (*grad)[3] += -2.0 * r * u / inner;
    }
    return f;
}

/// Projected gradient descent with a bold-driver step: grow 1.1x after a
/// successful step, halve and retry after an increase.
double minimize_from(Theta& theta, const Vector& y, const KnobTrajectory& knobs) {
    double step = kInitialStep;
    Theta grad;
    double f = objective(theta, y, knobs, &grad);
    for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
        Theta trial;
        for (std::size_t i = 0; i < 4; ++i) trial[i] = theta[i] - step * grad[i];
        trial = clip_box(trial);
        Theta trial_grad;
        const double trial_f = objective(trial, y, knobs, &trial_grad);
        if (trial_f <= f) {
            const double drop = f - trial_f;
            theta = trial;
            grad = trial_grad;
            f = trial_f;
            step *= 1.1;
            if (drop <= 1e-10 * std::max(f, 1e-12)) break;
        } else {
            step *= 0.5;
            if (step < 1e-16) break;
        }
    }
    return f;
}

}  // namespace

void DynamicsParams::validate() const {
    if (!(gamma_m >= 0.0) || !(gamma_m < 1.0)) {
        throw Error(Errc::validation, "dynamics.gamma_m must be in [0, 1)");
    }
    if (!(delta_d >= 0.0) || !(delta_q >= 0.0) || !(delta_u >= 0.0)) {
        throw Error(Errc::validation, "dynamics delta terms must be >= 0");
    }
    if (!(b0 > 0.0)) throw Error(Errc::validation, "dynamics.b0 must be > 0");
}

KnobTrajectory KnobTrajectory::constant(double q, double u, std::size_t length) {
    KnobTrajectory traj;
    traj.steps.assign(length, SamplingKnobs{q, u});
    traj.validate();
    return traj;
}

void KnobTrajectory::validate() const {
    for (const SamplingKnobs& k : steps) k.validate();
}

bool KnobTrajectory::is_constant() const {
    for (std::size_t t = 1; t < steps.size(); ++t) {
        if (steps[t].q != steps[0].q || steps[t].u != steps[0].u) return false;
    }
    return true;
}

double amplification_factor(const DynamicsParams& params, double q, double u) {
    params.validate();
    return (1.0 - params.gamma_m) *
           (1.0 + params.delta_d + params.delta_q * (1.0 - q) + params.delta_u * u);
}

Vector simulate_bias(const DynamicsParams& params, const KnobTrajectory& knobs) {
    params.validate();
    knobs.validate();
    Vector bias;
    bias.reserve(knobs.steps.size() + 1);
    bias.push_back(params.b0);
    for (const SamplingKnobs& k : knobs.steps) {
        bias.push_back(amplification_factor(params, k.q, k.u) * bias.back());
    }
    return bias;
}

DynamicsFit fit_dynamics(const Vector& observed_b, const KnobTrajectory& knobs) {
    for (const double b : observed_b) {
        if (!(b > 0.0)) throw Error(Errc::domain, "observed bias values must be > 0");
    }
    if (observed_b.size() < 5) {
        throw Error(Errc::insufficient_trajectory,
                    "dynamics fit needs at least 5 observations (4 steps)");
    }
    knobs.validate();
    const std::size_t steps = observed_b.size() - 1;
    if (knobs.steps.size() != steps) {
        throw Error(Errc::shape, "knob trajectory length must match the bias steps");
    }

    Vector y(steps);
    for (std::size_t t = 0; t < steps; ++t) y[t] = std::log(observed_b[t + 1] / observed_b[t]);

    // Start 0 explains the mean step with gamma or delta_d alone; the rest
    // are random corners of the box.
    const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(steps);
    const double mean_a = std::exp(mean_y);
    Theta best_theta;
    if (mean_a <= 1.0) {
        best_theta = clip_box({1.0 - mean_a, 0.0, 0.0, 0.0});
    } else {
        best_theta = clip_box({0.0, mean_a - 1.0, 0.0, 0.0});
    }
    double best_f = minimize_from(best_theta, y, knobs);

    RandomSource rng(kFitSeed);
    for (std::size_t attempt = 1; attempt < kRestarts; ++attempt) {
        Theta theta = {rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5),
                       rng.uniform(0.0, 0.5)};
        const double f = minimize_from(theta, y, knobs);
        if (f < best_f) {
            best_f = f;
            best_theta = theta;
        }
    }

    DynamicsFit fit;
    fit.params.gamma_m = best_theta[0];
    fit.params.delta_d = best_theta[1];
    fit.params.delta_q = best_theta[2];
    fit.params.delta_u = best_theta[3];
    fit.params.b0 = observed_b[0];
    fit.log_a = Vector(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        fit.log_a[t] = log_amplification(best_theta, knobs.steps[t].q, knobs.steps[t].u);
    }
    fit.residual_rms = std::sqrt(best_f / static_cast<double>(steps));
    fit.knobs_constant = knobs.is_constant();
    return fit;
}

Vector bias_series(const std::vector<GenerationRecord>& records, BiasMeasure measure) {
    Vector series;
    series.reserve(records.size());
    for (const GenerationRecord& rec : records) {
        const double raw = measure == BiasMeasure::max_disparity ? rec.md : 1.0 - rec.eo;
        series.push_back(std::max(raw, kBiasFloor));
    }
    return series;
}

std::string dynamics_fit_to_json(const DynamicsFit& fit) {
    nlohmann::json j;
    j["params"] = {{"gamma_m", fit.params.gamma_m},
                   {"delta_d", fit.params.delta_d},
                   {"delta_q", fit.params.delta_q},
                   {"delta_u", fit.params.delta_u},
                   {"b0", fit.params.b0}};
    j["log_a"] = fit.log_a;
    nlohmann::json amps = nlohmann::json::array();
    for (const double la : fit.log_a) amps.push_back(std::exp(la));
    j["a"] = std::move(amps);
    j["residual_rms"] = fit.residual_rms;
    j["knobs_constant"] = fit.knobs_constant;
    return j.dump(2);
}

}  // namespace selfloop
