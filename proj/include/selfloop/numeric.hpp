#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "selfloop/error.hpp"

namespace selfloop {

using Vector = std::vector<double>;

/// Dense row-major matrix. Sized for the small symmetric problems this
/// project works with (d <= 64), not for general linear algebra.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, const Vector& x);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix transpose(const Matrix& a);
double trace(const Matrix& a);

/// Max absolute entry.
double norm_inf(const Matrix& a);
double norm_inf(const Vector& v);

/// |a[i,j] - a[j,i]| <= tol * max(1, |a[i,j]|) for all pairs.
bool is_symmetric(const Matrix& a, double tol = 1e-12);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& v);
Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double s, const Vector& v);

/// y += alpha * x, in place.
void axpy(double alpha, const Vector& x, Vector& y);

/// v *= alpha, in place.
void scale(double alpha, Vector& v);

struct MeanCov {
    Vector mean;
    Matrix cov;
};

/// Sample mean and unbiased covariance (n-1 divisor). The covariance is
/// exactly symmetric as stored.
MeanCov mean_cov(const std::vector<Vector>& samples);

struct EigenDecomposition {
    Vector values;   // descending
    Matrix vectors;  // orthonormal columns, vectors.col(i) pairs with values[i]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Iteration cap
/// 100 sweeps, off-diagonal tolerance 1e-12 relative to the matrix scale.
EigenDecomposition sym_eig(const Matrix& m);

/// Symmetric PSD square root via sym_eig. Eigenvalues in [-1e-8, 0) are
/// clamped to 0; anything below -1e-8 raises Errc::not_psd.
Matrix psd_sqrt(const Matrix& m);

/// Seedable deterministic random stream.
///
/// Algorithm (fixed): xoshiro256++ over four 64-bit words seeded by
/// splitmix64 of the user seed. uniform() maps the top 53 bits to [0,1);
/// normal() is one Box-Muller draw (two uniforms per value, no cached
/// spare). The integer stream is bit-exact across platforms; normal()
/// depends on libm log/cos and may differ in the last ulp between C
/// libraries.
///
/// Single-owner mutable state: do not share across threads. Parallel work
/// takes child sources via fork(), which consumes one draw from the parent.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n), unbiased (rejection). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Standard normal draw.
    double normal();
    Vector normal_vector(std::size_t dim);

    /// Child stream seeded from the next draw of this stream.
    RandomSource fork();

private:
    std::array<std::uint64_t, 4> state_;
};

}  // namespace selfloop
