#include "selfloop/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "selfloop/error.hpp"

namespace selfloop {

namespace {

constexpr double kCovRegularizer = 1e-6;
constexpr double kRelLLTol = 1e-6;
constexpr double kMonotoneTol = 1e-9;
constexpr std::size_t kMaxEmIterations = 100;
constexpr std::size_t kSeedCandidates = 10;

struct ComponentCache {
    Matrix vectors;
    Vector inv_values;
    double log_det = 0.0;
};

ComponentCache cache_component(const Matrix& cov) {
    const EigenDecomposition eig = sym_eig(cov);
    ComponentCache cache;
    cache.vectors = eig.vectors;
    cache.inv_values = Vector(eig.values.size());
    for (std::size_t i = 0; i < eig.values.size(); ++i) {
        const double lambda = std::max(eig.values[i], 1e-12);
        cache.inv_values[i] = 1.0 / lambda;
        cache.log_det += std::log(lambda);
    }
    return cache;
}

double log_density(const ComponentCache& cache, const Vector& mean, const Vector& x) {
    const std::size_t d = x.size();
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double zi = 0.0;
        for (std::size_t r = 0; r < d; ++r) zi += cache.vectors(r, i) * (x[r] - mean[r]);
        quad += zi * zi * cache.inv_values[i];
    }
    constexpr double kLog2Pi = 1.8378770664093453;
    return -0.5 * (static_cast<double>(d) * kLog2Pi + cache.log_det + quad);
}

/// Responsibilities (when resp != nullptr) and total log-likelihood.
double e_step(const std::vector<Vector>& points, const GaussianMixture& mix,
              std::vector<Vector>* resp) {
    const std::size_t n = points.size();
    const std::size_t k = mix.components;
    std::vector<ComponentCache> caches;
    caches.reserve(k);
    Vector log_w(k);
    for (std::size_t c = 0; c < k; ++c) {
        caches.push_back(cache_component(mix.covs[c]));
        log_w[c] = mix.weights[c] > 0.0 ? std::log(mix.weights[c])
                                        : -std::numeric_limits<double>::infinity();
    }
    double ll = 0.0;
    Vector joint(k);
    for (std::size_t i = 0; i < n; ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            joint[c] = log_w[c] + log_density(caches[c], mix.means[c], points[i]);
            top = std::max(top, joint[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(joint[c] - top);
        const double lse = top + std::log(sum);
        ll += lse;
        if (resp != nullptr) {
            for (std::size_t c = 0; c < k; ++c) (*resp)[i][c] = std::exp(joint[c] - lse);
        }
    }
    return ll;
}

Matrix regularized_cov(const std::vector<Vector>& points, const std::vector<Vector>& resp,
                       std::size_t component, const Vector& mean, double total_resp) {
    const std::size_t d = mean.size();
    Matrix cov(d, d);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double r = resp[i][component];
        if (r == 0.0) continue;
        for (std::size_t a = 0; a < d; ++a) {
            const double da = points[i][a] - mean[a];
            for (std::size_t b = a; b < d; ++b) {
                cov(a, b) += r * da * (points[i][b] - mean[b]);
            }
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            const double v = cov(a, b) / total_resp;
            cov(a, b) = v;
            cov(b, a) = v;
        }
        cov(a, a) += kCovRegularizer;
    }
    return cov;
}

GaussianMixture seed_mixture(const std::vector<Vector>& points, std::size_t k,
                             const Matrix& global_cov, RandomSource& rng) {
    const std::size_t n = points.size();
    std::vector<std::size_t> centers;
    centers.push_back(rng.uniform_int(n));
    Vector dist2(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vector diff = points[i];
        axpy(-1.0, points[centers[0]], diff);
        dist2[i] = dot(diff, diff);
    }
    while (centers.size() < k) {
        const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double run = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                run += dist2[i];
                if (run >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(n);
        }
        centers.push_back(pick);
        for (std::size_t i = 0; i < n; ++i) {
            Vector diff = points[i];
            axpy(-1.0, points[pick], diff);
            dist2[i] = std::min(dist2[i], dot(diff, diff));
        }
    }
    GaussianMixture mix;
    mix.components = k;
    mix.weights = Vector(k, 1.0 / static_cast<double>(k));
    for (const std::size_t c : centers) {
        mix.means.push_back(points[c]);
        mix.covs.push_back(global_cov);
    }
    return mix;
}

void canonicalize(GaussianMixture& mix) {
    std::vector<std::size_t> order(mix.components);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&mix](std::size_t a, std::size_t b) { return mix.weights[a] > mix.weights[b]; });
    GaussianMixture sorted;
    sorted.components = mix.components;
    for (const std::size_t i : order) {
        sorted.weights.push_back(mix.weights[i]);
        sorted.means.push_back(std::move(mix.means[i]));
        sorted.covs.push_back(std::move(mix.covs[i]));
    }
    mix = std::move(sorted);
}

}  // namespace

void GaussianMixture::validate() const {
    if (components < 1) throw Error(Errc::validation, "mixture needs at least one component");
    if (weights.size() != components || means.size() != components || covs.size() != components) {
        throw Error(Errc::shape, "mixture field sizes disagree with component count");
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < components; ++c) {
        if (!(weights[c] >= 0.0)) throw Error(Errc::validation, "mixture weights must be >= 0");
        if (c > 0 && weights[c] > weights[c - 1] + 1e-15) {
            throw Error(Errc::validation, "mixture weights must be sorted descending");
        }
        sum += weights[c];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::validation, "mixture weights must sum to 1");
    const std::size_t d = means.front().size();
    for (std::size_t c = 0; c < components; ++c) {
        if (means[c].size() != d || covs[c].rows() != d || covs[c].cols() != d) {
            throw Error(Errc::shape, "mixture component dimensions disagree");
        }
        if (!is_symmetric(covs[c])) {
            throw Error(Errc::validation, "mixture covariance must be symmetric");
        }
        const EigenDecomposition eig = sym_eig(covs[c]);
        if (eig.values.back() < kCovRegularizer - 1e-9) {
            throw Error(Errc::validation, "mixture covariance eigenvalue below the regularizer");
        }
    }
}

void SamplingKnobs::validate() const {
    if (!(q >= 0.0) || !(q <= 1.0)) throw Error(Errc::validation, "knobs.q must be in [0, 1]");
    if (!(u >= 0.0) || !std::isfinite(u)) throw Error(Errc::validation, "knobs.u must be >= 0");
}

Vector skewed_weights(const Vector& weights, double u) {
    Vector skewed(weights.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        skewed[i] = weights[i] > 0.0 ? std::pow(weights[i], 1.0 + u) : 0.0;
        sum += skewed[i];
    }
    if (sum <= 0.0) throw Error(Errc::degenerate_data, "all mixture weights are zero");
    for (double& w : skewed) w /= sum;
    return skewed;
}

GaussianMixture fit_gmm(const std::vector<Vector>& points, std::size_t components,
                        RandomSource& rng, FitLog* log) {
    if (components < 1) throw Error(Errc::validation, "component count must be >= 1");
    if (points.size() < 5 * components) {
        throw Error(Errc::insufficient_data,
                    "mixture fit needs at least " + std::to_string(5 * components) +
                        " points, got " + std::to_string(points.size()));
    }
    const std::size_t d = points.front().size();
    for (const Vector& p : points) {
        if (p.size() != d) throw Error(Errc::shape, "mixture fit points have mixed dimensions");
    }
    bool all_same = true;
    for (const Vector& p : points) {
        if (p != points.front()) {
            all_same = false;
            break;
        }
    }
    if (all_same) throw Error(Errc::degenerate_data, "all points identical; nothing to fit");

    const MeanCov global = mean_cov(points);
    Matrix global_cov = global.cov;
    for (std::size_t a = 0; a < d; ++a) global_cov(a, a) += kCovRegularizer;

    GaussianMixture best_seed;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t attempt = 0; attempt < kSeedCandidates; ++attempt) {
        GaussianMixture candidate = seed_mixture(points, components, global_cov, rng);
        const double score = e_step(points, candidate, nullptr);
        if (score > best_score) {
            best_score = score;
            best_seed = std::move(candidate);
        }
    }

    GaussianMixture mix = std::move(best_seed);
    std::vector<Vector> resp(points.size(), Vector(components, 0.0));
    double prev_ll = -std::numeric_limits<double>::infinity();
    FitLog local;
    for (std::size_t iter = 1; iter <= kMaxEmIterations; ++iter) {
        const double ll = e_step(points, mix, &resp);
        if (std::isfinite(prev_ll) && ll < prev_ll - kMonotoneTol * std::max(1.0, std::abs(prev_ll))) {
            throw Error(Errc::convergence,
                        "log-likelihood decreased at iteration " + std::to_string(iter));
        }
        local.ll_trace.push_back(ll);
        local.iterations = iter;
        local.log_likelihood = ll;
        const bool converged =
            std::isfinite(prev_ll) && std::abs(ll - prev_ll) < kRelLLTol * std::max(1.0, std::abs(prev_ll));
        prev_ll = ll;
        if (converged) break;

        for (std::size_t c = 0; c < components; ++c) {
            double total = 0.0;
            for (std::size_t i = 0; i < points.size(); ++i) total += resp[i][c];
            mix.weights[c] = total / static_cast<double>(points.size());
            if (total < 1e-10) continue;  // dead component keeps its parameters
            Vector mean(d, 0.0);
            for (std::size_t i = 0; i < points.size(); ++i) {
                axpy(resp[i][c], points[i], mean);
            }
            scale(1.0 / total, mean);
            mix.means[c] = mean;
            mix.covs[c] = regularized_cov(points, resp, c, mean, total);
        }
    }
    canonicalize(mix);
    if (log != nullptr) *log = std::move(local);
    return mix;
}

GeneratorModel fit_generator(const Dataset& pool, std::size_t components, RandomSource& rng) {
    if (pool.empty()) throw Error(Errc::empty_input, "generator fit pool is empty");
    const std::size_t classes = pool.schema.num_classes;
    std::vector<std::vector<Vector>> by_class(classes);
    for (const Sample& s : pool.samples) {
        by_class[static_cast<std::size_t>(s.class_label)].push_back(s.features);
    }
    std::vector<RandomSource> children;
    children.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) children.push_back(rng.fork());

    GeneratorModel gen;
    gen.schema = pool.schema;
    gen.per_class.reserve(classes);
    gen.fit_log.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        try {
            gen.per_class.push_back(fit_gmm(by_class[c], components, children[c], &gen.fit_log[c]));
        } catch (const Error& e) {
            throw Error(e.code(), "class " + std::to_string(c) + ": " + e.detail());
        }
    }
    return gen;
}

Dataset sample_generator(const GeneratorModel& gen, const std::vector<std::size_t>& class_counts,
                         const SamplingKnobs& knobs, int generation, RandomSource& rng) {
    knobs.validate();
    if (gen.per_class.empty()) throw Error(Errc::empty_input, "generator has no class mixtures");
    if (class_counts.size() != gen.per_class.size()) {
        throw Error(Errc::shape, "class_counts length does not match the generator");
    }
    if (generation < 1) {
        throw Error(Errc::provenance, "generated samples need a generation index >= 1");
    }

    Dataset out;
    out.schema = gen.schema;
    const double shrink = 1.0 / std::sqrt(1.0 + knobs.u);
    for (std::size_t c = 0; c < gen.per_class.size(); ++c) {
        const GaussianMixture& mix = gen.per_class[c];
        const Vector skewed = skewed_weights(mix.weights, knobs.u);
        std::vector<Matrix> roots;
        Vector noise_refs(mix.components);
        roots.reserve(mix.components);
        for (std::size_t k = 0; k < mix.components; ++k) {
            roots.push_back(psd_sqrt(mix.covs[k]));
            double diag = 0.0;
            for (std::size_t a = 0; a < mix.covs[k].rows(); ++a) diag += mix.covs[k](a, a);
            noise_refs[k] = std::sqrt(diag / static_cast<double>(mix.covs[k].rows()));
        }
        const std::size_t d = mix.means.front().size();
        for (std::size_t i = 0; i < class_counts[c]; ++i) {
            const double target = rng.uniform();
            std::size_t k = mix.components - 1;
            double run = 0.0;
            for (std::size_t j = 0; j < mix.components; ++j) {
                run += skewed[j];
                if (target < run) {
                    k = j;
                    break;
                }
            }
            const Vector z = rng.normal_vector(d);
            Vector x = roots[k] * z;
            scale(shrink, x);
            axpy(1.0, mix.means[k], x);
            if (knobs.q < 1.0) {
                const Vector noise = rng.normal_vector(d);
                axpy((1.0 - knobs.q) * noise_refs[k], noise, x);
            }
            Sample s;
            s.features = std::move(x);
            s.class_label = static_cast<int>(c);
            s.subgroup = kUnknownSubgroup;
            s.origin = generation;
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

std::string generator_to_json(const GeneratorModel& gen) {
    nlohmann::json j;
    j["schema"] = {{"num_classes", gen.schema.num_classes},
                   {"num_subgroups", gen.schema.num_subgroups},
                   {"feature_dim", gen.schema.feature_dim}};
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < gen.per_class.size(); ++c) {
        const GaussianMixture& mix = gen.per_class[c];
        nlohmann::json jm;
        jm["weights"] = mix.weights;
        nlohmann::json means = nlohmann::json::array();
        for (const Vector& m : mix.means) means.push_back(m);
        jm["means"] = std::move(means);
        nlohmann::json covs = nlohmann::json::array();
        for (const Matrix& cov : mix.covs) {
            nlohmann::json rows = nlohmann::json::array();
            for (std::size_t r = 0; r < cov.rows(); ++r) {
                nlohmann::json row = nlohmann::json::array();
                for (std::size_t col = 0; col < cov.cols(); ++col) row.push_back(cov(r, col));
                rows.push_back(std::move(row));
            }
            covs.push_back(std::move(rows));
        }
        jm["covs"] = std::move(covs);
        if (c < gen.fit_log.size()) {
            jm["log_likelihood"] = gen.fit_log[c].log_likelihood;
            jm["iterations"] = gen.fit_log[c].iterations;
        }
        classes.push_back(std::move(jm));
    }
    j["classes"] = std::move(classes);
    return j.dump(2);
}

GeneratorModel generator_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::parse, std::string("generator json: ") + e.what());
    }
    try {
        GeneratorModel gen;
        const auto& js = j.at("schema");
        gen.schema.num_classes = js.at("num_classes").get<std::size_t>();
        gen.schema.num_subgroups = js.at("num_subgroups").get<std::size_t>();
        gen.schema.feature_dim = js.at("feature_dim").get<std::size_t>();
        for (const nlohmann::json& jm : j.at("classes")) {
            GaussianMixture mix;
            mix.weights = jm.at("weights").get<Vector>();
            mix.components = mix.weights.size();
            for (const nlohmann::json& m : jm.at("means")) mix.means.push_back(m.get<Vector>());
            for (const nlohmann::json& jc : jm.at("covs")) {
                const std::size_t nr = jc.size();
                Matrix cov(nr, nr);
                for (std::size_t r = 0; r < nr; ++r) {
                    if (jc.at(r).size() != nr) {
                        throw Error(Errc::schema, "generator json: covariance not square");
                    }
                    for (std::size_t col = 0; col < nr; ++col) {
                        cov(r, col) = jc.at(r).at(col).get<double>();
                    }
                }
                mix.covs.push_back(std::move(cov));
            }
            FitLog log;
            if (jm.contains("log_likelihood")) {
                log.log_likelihood = jm.at("log_likelihood").get<double>();
                log.iterations = jm.at("iterations").get<std::size_t>();
            }
            mix.validate();
            gen.per_class.push_back(std::move(mix));
            gen.fit_log.push_back(std::move(log));
        }
        if (gen.per_class.size() != gen.schema.num_classes) {
            throw Error(Errc::schema, "generator json: class count does not match schema");
        }
        return gen;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::schema, std::string("generator json: ") + e.what());
    }
}

}  // namespace selfloop
