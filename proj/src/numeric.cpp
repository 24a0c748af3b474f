#include "selfloop/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace selfloop {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw Error(Errc::shape, "matrix product needs a.cols == b.rows");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Vector operator*(const Matrix& a, const Vector& x) {
    if (a.cols() != x.size())
        throw Error(Errc::shape, "matrix-vector product needs a.cols == x.size");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(Errc::shape, "matrix sum needs equal shapes");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(Errc::shape, "matrix difference needs equal shapes");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

double trace(const Matrix& a) {
    double t = 0.0;
    const std::size_t n = std::min(a.rows(), a.cols());
    for (std::size_t i = 0; i < n; ++i) t += a(i, i);
    return t;
}

double norm_inf(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::fabs(v));
    return m;
}

double norm_inf(const Vector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

bool is_symmetric(const Matrix& a, double tol) {
    if (a.rows() != a.cols()) return false;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            const double gap = std::fabs(a(i, j) - a(j, i));
            if (gap > tol * std::max(1.0, std::fabs(a(i, j)))) return false;
        }
    return true;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw Error(Errc::shape, "dot needs equal dims");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

Vector operator+(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw Error(Errc::shape, "vector sum needs equal dims");
    Vector c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

Vector operator-(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw Error(Errc::shape, "vector difference needs equal dims");
    Vector c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

Vector operator*(double s, const Vector& v) {
    Vector c = v;
    for (double& x : c) x *= s;
    return c;
}

void axpy(double alpha, const Vector& x, Vector& y) {
    if (x.size() != y.size()) throw Error(Errc::shape, "axpy needs equal dims");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, Vector& v) {
    for (double& x : v) x *= alpha;
}

MeanCov mean_cov(const std::vector<Vector>& samples) {
    if (samples.size() < 2)
        throw Error(Errc::insufficient_data, "mean_cov needs at least 2 samples");
    const std::size_t n = samples.size();
    const std::size_t d = samples[0].size();
    for (const Vector& s : samples)
        if (s.size() != d) throw Error(Errc::shape, "mean_cov samples must share one dim");

    Vector mean(d, 0.0);
    for (const Vector& s : samples)
        for (std::size_t j = 0; j < d; ++j) mean[j] += s[j];
    for (double& m : mean) m /= static_cast<double>(n);

    // Upper triangle only, then mirror, so the result is exactly symmetric.
    Matrix cov(d, d);
    for (const Vector& s : samples) {
        for (std::size_t i = 0; i < d; ++i) {
            const double di = s[i] - mean[i];
            for (std::size_t j = i; j < d; ++j) cov(i, j) += di * (s[j] - mean[j]);
        }
    }
    const double div = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= div;
            cov(j, i) = cov(i, j);
        }
    return {std::move(mean), std::move(cov)};
}

namespace {

constexpr int kJacobiMaxSweeps = 100;
constexpr double kJacobiTol = 1e-12;

double off_diagonal_max(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) m = std::max(m, std::fabs(a(i, j)));
    return m;
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& m) {
    if (m.rows() != m.cols()) throw Error(Errc::shape, "sym_eig needs a square matrix");
    if (!is_symmetric(m, 1e-12))
        throw Error(Errc::shape, "sym_eig needs a symmetric matrix");

    const std::size_t n = m.rows();
    Matrix a = m;
    Matrix v = Matrix::identity(n);
    const double scale = std::max(1.0, norm_inf(m));

    int sweep = 0;
    for (; sweep < kJacobiMaxSweeps; ++sweep) {
        if (off_diagonal_max(a) <= kJacobiTol * scale) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) <= kJacobiTol * scale) continue;

                // Rotation angle that zeroes a(p,q); stable cot formula.
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (sweep == kJacobiMaxSweeps && off_diagonal_max(a) > kJacobiTol * scale)
        throw Error(Errc::convergence, "jacobi sweeps exhausted without convergence");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&a](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenDecomposition out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

Matrix psd_sqrt(const Matrix& m) {
    EigenDecomposition eig = sym_eig(m);
    const std::size_t n = m.rows();
    Vector roots(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lambda = eig.values[i];
        if (lambda < -1e-8)
            throw Error(Errc::not_psd,
                        "psd_sqrt eigenvalue " + std::to_string(lambda) + " below -1e-8");
        if (lambda < 0.0) lambda = 0.0;
        roots[i] = std::sqrt(lambda);
    }
    // R = V diag(sqrt(lambda)) V^T, mirrored so the result is exactly symmetric.
    Matrix r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                acc += eig.vectors(i, k) * roots[k] * eig.vectors(j, k);
            r(i, j) = acc;
            r(j, i) = acc;
        }
    return r;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RandomSource::RandomSource(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (std::uint64_t& w : state_) w = splitmix64(s);
}

std::uint64_t RandomSource::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RandomSource::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomSource::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RandomSource::uniform_int(std::uint64_t n) {
    if (n == 0) throw Error(Errc::domain, "uniform_int needs n > 0");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t draw;
    do {
        draw = next_u64();
    } while (draw > limit);
    return draw % n;
}

double RandomSource::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

Vector RandomSource::normal_vector(std::size_t dim) {
    Vector v(dim);
    for (double& x : v) x = normal();
    return v;
}

RandomSource RandomSource::fork() { return RandomSource(next_u64()); }

}  // namespace selfloop
