#include "selfloop/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace selfloop {

std::vector<std::vector<double>> WorldSpec::uniform_proportions(std::size_t classes,
                                                                std::size_t subgroups) {
    return std::vector<std::vector<double>>(
        classes, std::vector<double>(subgroups, 1.0 / static_cast<double>(subgroups)));
}

void WorldSpec::validate() const {
    if (num_classes < 2) throw Error(Errc::validation, "world.num_classes must be >= 2");
    if (num_subgroups < 1) throw Error(Errc::validation, "world.num_subgroups must be >= 1");
    if (feature_dim < 2) throw Error(Errc::validation, "world.feature_dim must be >= 2");
    if (!(class_separation > 0.0))
        throw Error(Errc::validation, "world.class_separation must be > 0");
    if (!(subgroup_offset > 0.0))
        throw Error(Errc::validation, "world.subgroup_offset must be > 0");
    if (!(noise_scale > 0.0)) throw Error(Errc::validation, "world.noise_scale must be > 0");
    if (subgroup_proportions.size() != num_classes)
        throw Error(Errc::validation, "world.subgroup_proportions needs one row per class");
    for (std::size_t c = 0; c < subgroup_proportions.size(); ++c) {
        const auto& row = subgroup_proportions[c];
        if (row.size() != num_subgroups)
            throw Error(Errc::validation, "world.subgroup_proportions row " + std::to_string(c) +
                                              " needs one entry per subgroup");
        double sum = 0.0;
        for (double p : row) {
            if (p < 0.0)
                throw Error(Errc::validation, "world.subgroup_proportions row " +
                                                  std::to_string(c) + " has a negative entry");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw Error(Errc::validation, "world.subgroup_proportions row " + std::to_string(c) +
                                              " must sum to 1");
    }
}

void Dataset::validate() const {
    for (const Sample& s : samples) {
        if (s.features.size() != schema.feature_dim)
            throw Error(Errc::shape, "sample feature dim does not match schema");
        if (s.class_label < 0 || static_cast<std::size_t>(s.class_label) >= schema.num_classes)
            throw Error(Errc::validation, "sample class label out of range");
        if (s.is_real()) {
            if (s.subgroup < 0 || static_cast<std::size_t>(s.subgroup) >= schema.num_subgroups)
                throw Error(Errc::validation, "real sample must carry a known subgroup");
        } else {
            if (s.subgroup != kUnknownSubgroup)
                throw Error(Errc::validation, "generated sample must not carry a subgroup");
            if (s.origin < 1) throw Error(Errc::validation, "generated origin must be >= 1");
        }
    }
}

namespace {

constexpr int kPlacementAttempts = 1000;

/// Subgroup indices in the draw/selection order: descending proportion,
/// ties by ascending index.
std::vector<std::size_t> subgroup_draw_order(const std::vector<double>& proportions) {
    std::vector<std::size_t> order(proportions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&proportions](std::size_t a, std::size_t b) {
        return proportions[a] > proportions[b];
    });
    return order;
}

Vector random_unit_vector(std::size_t dim, RandomSource& rng) {
    for (;;) {
        Vector v = rng.normal_vector(dim);
        const double n = norm2(v);
        if (n > 1e-12) {
            for (double& x : v) x /= n;
            return v;
        }
    }
}

}  // namespace

World build_world(const WorldSpec& spec, RandomSource& rng) {
    spec.validate();
    const std::size_t L = spec.num_classes;
    const std::size_t G = spec.num_subgroups;
    const std::size_t d = spec.feature_dim;

    std::vector<Vector> centers;
    centers.reserve(L);
    for (std::size_t c = 0; c < L; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            Vector candidate = rng.normal_vector(d);
            for (double& x : candidate) x *= spec.class_separation;
            placed = std::all_of(centers.begin(), centers.end(), [&](const Vector& other) {
                return norm2(candidate - other) >= spec.class_separation;
            });
            if (placed) centers.push_back(std::move(candidate));
        }
        if (!placed)
            throw Error(Errc::placement, "could not place class mean " + std::to_string(c) +
                                             " after 1000 attempts (separation too large for "
                                             "feature_dim)");
    }

    World world;
    world.spec = spec;
    world.component_means.assign(L, std::vector<Vector>(G));
    world.component_covs.assign(L, std::vector<Matrix>(G));
    world.component_sqrts.assign(L, std::vector<Matrix>(G));

    const double base_var = spec.noise_scale * spec.noise_scale;
    for (std::size_t c = 0; c < L; ++c) {
        const std::vector<std::size_t> order = subgroup_draw_order(spec.subgroup_proportions[c]);
        for (std::size_t g : order) {
            const Vector dir = random_unit_vector(d, rng);
            Vector mean = centers[c];
            for (std::size_t j = 0; j < d; ++j) mean[j] += spec.subgroup_offset * dir[j];

            Matrix a(d, d);
            for (double& x : a.data()) x = rng.normal();
            Matrix perturbation = a * transpose(a);
            const double top = sym_eig(perturbation).values.front();
            const double magnitude = rng.uniform() * 0.2;
            Matrix cov = Matrix::identity(d);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    cov(i, j) = base_var * (cov(i, j) + magnitude * perturbation(i, j) /
                                                            std::max(top, 1e-12));

            world.component_means[c][g] = std::move(mean);
            world.component_sqrts[c][g] = psd_sqrt(cov);
            world.component_covs[c][g] = std::move(cov);
        }
    }
    return world;
}

Dataset sample_dataset(const World& world, std::size_t n, RandomSource& rng) {
    if (n < 1) throw Error(Errc::domain, "sample_dataset needs n >= 1");
    const WorldSpec& spec = world.spec;
    const std::size_t L = spec.num_classes;
    const std::size_t G = spec.num_subgroups;
    const std::size_t d = spec.feature_dim;

    std::vector<std::vector<std::size_t>> orders(L);
    for (std::size_t c = 0; c < L; ++c)
        orders[c] = subgroup_draw_order(spec.subgroup_proportions[c]);

    Dataset dataset;
    dataset.schema = {L, G, d};
    dataset.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng.uniform_int(L);
        const double u = rng.uniform();
        std::size_t g = orders[c].back();
        double cum = 0.0;
        for (std::size_t candidate : orders[c]) {
            cum += spec.subgroup_proportions[c][candidate];
            if (u < cum) {
                g = candidate;
                break;
            }
        }
        const Vector z = rng.normal_vector(d);
        Vector x = world.component_sqrts[c][g] * z;
        for (std::size_t j = 0; j < d; ++j) x[j] += world.component_means[c][g][j];

        Sample sample;
        sample.features = std::move(x);
        sample.class_label = static_cast<int>(c);
        sample.subgroup = static_cast<int>(g);
        sample.origin = kRealOrigin;
        dataset.samples.push_back(std::move(sample));
    }
    return dataset;
}

std::uint64_t assign_sample_ids(Dataset& dataset, std::uint64_t start) {
    for (Sample& s : dataset.samples) s.id = start++;
    return start;
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write_dataset_csv(const Dataset& dataset, std::ostream& out) {
    const std::size_t d = dataset.schema.feature_dim;
    for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
    out << "y,g,provenance\n";
    for (const Sample& s : dataset.samples) {
        for (double f : s.features) out << format_double(f) << ',';
        out << s.class_label << ',' << s.subgroup << ',';
        if (s.is_real())
            out << "real";
        else
            out << "gen" << s.origin;
        out << '\n';
    }
}

void write_dataset_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(Errc::io, "cannot open " + path + " for writing");
    write_dataset_csv(dataset, out);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, const DatasetSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::empty_input, "dataset CSV has no header");
    const std::vector<std::string> header = split_csv_line(line);
    const std::size_t d = schema.feature_dim;
    if (header.size() != d + 3)
        throw Error(Errc::schema, "dataset CSV header has " + std::to_string(header.size()) +
                                      " columns, expected " + std::to_string(d + 3));

    Dataset dataset;
    dataset.schema = schema;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != d + 3)
            throw Error(Errc::parse, "dataset CSV row " + std::to_string(row) +
                                         " has wrong column count");
        Sample s;
        s.features.resize(d);
        try {
            for (std::size_t j = 0; j < d; ++j) s.features[j] = std::stod(fields[j]);
            s.class_label = std::stoi(fields[d]);
            s.subgroup = std::stoi(fields[d + 1]);
        } catch (const std::exception&) {
            throw Error(Errc::parse, "dataset CSV row " + std::to_string(row) +
                                         " has a non-numeric field");
        }
        const std::string& prov = fields[d + 2];
        if (prov == "real") {
            s.origin = kRealOrigin;
        } else if (prov.rfind("gen", 0) == 0) {
            try {
                s.origin = std::stoi(prov.substr(3));
            } catch (const std::exception&) {
                throw Error(Errc::parse, "dataset CSV row " + std::to_string(row) +
                                             " has bad provenance '" + prov + "'");
            }
        } else {
            throw Error(Errc::parse, "dataset CSV row " + std::to_string(row) +
                                         " has bad provenance '" + prov + "'");
        }
        dataset.samples.push_back(std::move(s));
    }
    dataset.validate();
    return dataset;
}

Dataset read_dataset_csv(const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open " + path);
    return read_dataset_csv(in, schema);
}

}  // namespace selfloop
