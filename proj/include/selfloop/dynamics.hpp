#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "selfloop/generator.hpp"
#include "selfloop/metrics.hpp"
#include "selfloop/numeric.hpp"

namespace selfloop {

/// Parameters of the multiplicative bias recursion
/// B_{t+1} = (1 - gamma_m) * (1 + delta_d + delta_q*(1-q_t) + delta_u*u_t) * B_t.
struct DynamicsParams {
    double gamma_m = 0.0;  // mitigation strength, in [0, 1)
    double delta_d = 0.0;  // baseline drift, >= 0
    double delta_q = 0.0;  // quality sensitivity, >= 0
    double delta_u = 0.0;  // skew sensitivity, >= 0
    double b0 = 1.0;       // initial bias, > 0

    void validate() const;
};

struct KnobTrajectory {
    std::vector<SamplingKnobs> steps;

    static KnobTrajectory constant(double q, double u, std::size_t length);
    void validate() const;
    bool is_constant() const;
};

/// One step's multiplier A_t; always positive for valid parameters.
double amplification_factor(const DynamicsParams& params, double q, double u);

/// Forward recursion from params.b0 through every knob step; returns
/// steps+1 strictly positive values.
Vector simulate_bias(const DynamicsParams& params, const KnobTrajectory& knobs);

struct DynamicsFit {
    DynamicsParams params;
    Vector log_a;               // fitted per-step log A_t
    double residual_rms = 0.0;  // RMS of log-step residuals
    bool knobs_constant = false;  // constant knobs: only the product A_t is identifiable
};

/// Least squares on log B steps: minimizes sum_t (log B_{t+1} - log B_t -
/// log A_t(theta))^2 under the parameter boxes, via 16-restart projected
/// gradient descent with an adaptive step (deterministic internal seeding).
/// Needs at least 5 observations (4 steps); params.b0 is pinned to
/// observed_b[0].
DynamicsFit fit_dynamics(const Vector& observed_b, const KnobTrajectory& knobs);

/// Which loop metric serves as the scalar bias observation.
enum class BiasMeasure { max_disparity, one_minus_eo };

/// Extract the bias trajectory from loop records, floored at 1e-4 so the
/// log-space fit stays finite.
Vector bias_series(const std::vector<GenerationRecord>& records,
                   BiasMeasure measure = BiasMeasure::max_disparity);

std::string dynamics_fit_to_json(const DynamicsFit& fit);

}  // namespace selfloop
