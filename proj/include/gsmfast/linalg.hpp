#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>

#include "gsmfast/errors.hpp"
#include "gsmfast/tensor.hpp"

namespace gsmfast::linalg {

/// Largest channel count the fixed-size kernels support.
inline constexpr std::size_t kMaxDim = 8;

/// Matrices whose 1-norm condition estimate exceeds this are rejected.
inline constexpr double kMaxCondition = 1e12;

/// Fixed-capacity complex vector (dimension <= kMaxDim), stack allocated.
class SmallComplexVector {
  public:
    SmallComplexVector() = default;
    explicit SmallComplexVector(std::size_t n) : n_(n) {
        if (n > kMaxDim)
            throw InvalidArgument("vector dimension exceeds kMaxDim");
        v_.fill(cplx{});
    }

    static SmallComplexVector unit(std::size_t n, std::size_t m) {
        SmallComplexVector e(n);
        e[m] = 1.0;
        return e;
    }

    static SmallComplexVector from(std::span<const cplx> values) {
        SmallComplexVector v(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            v[i] = values[i];
        return v;
    }

    std::size_t size() const noexcept { return n_; }
    cplx& operator[](std::size_t i) noexcept { return v_[i]; }
    const cplx& operator[](std::size_t i) const noexcept { return v_[i]; }

    double squared_norm() const noexcept {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            s += std::norm(v_[i]);
        return s;
    }

  private:
    std::size_t n_ = 0;
    std::array<cplx, kMaxDim> v_{};
};

/// Fixed-capacity square complex matrix (dimension <= kMaxDim), row-major.
class SmallComplexMatrix {
  public:
    SmallComplexMatrix() = default;
    explicit SmallComplexMatrix(std::size_t n) : n_(n) {
        if (n > kMaxDim)
            throw InvalidArgument("matrix dimension exceeds kMaxDim");
        a_.fill(cplx{});
    }

    static SmallComplexMatrix identity(std::size_t n) {
        SmallComplexMatrix I(n);
        for (std::size_t i = 0; i < n; ++i)
            I(i, i) = 1.0;
        return I;
    }

    /// Copies an n x n row-major block.
    static SmallComplexMatrix from(std::span<const cplx> rowmajor, std::size_t n) {
        if (rowmajor.size() != n * n)
            throw ShapeMismatch("matrix data does not hold n*n entries");
        SmallComplexMatrix A(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                A(i, j) = rowmajor[i * n + j];
        return A;
    }

    std::size_t dim() const noexcept { return n_; }
    cplx& operator()(std::size_t i, std::size_t j) noexcept {
        return a_[i * kMaxDim + j];
    }
    const cplx& operator()(std::size_t i, std::size_t j) const noexcept {
        return a_[i * kMaxDim + j];
    }

    SmallComplexMatrix adjoint() const {
        SmallComplexMatrix B(n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                B(j, i) = std::conj((*this)(i, j));
        return B;
    }

    double norm1() const noexcept {
        double best = 0.0;
        for (std::size_t j = 0; j < n_; ++j) {
            double col = 0.0;
            for (std::size_t i = 0; i < n_; ++i)
                col += std::abs((*this)(i, j));
            best = std::max(best, col);
        }
        return best;
    }

    double frobenius_norm() const noexcept {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                s += std::norm((*this)(i, j));
        return std::sqrt(s);
    }

    cplx trace() const noexcept {
        cplx t{};
        for (std::size_t i = 0; i < n_; ++i)
            t += (*this)(i, i);
        return t;
    }

    friend SmallComplexMatrix operator*(const SmallComplexMatrix& A,
                                        const SmallComplexMatrix& B) {
        if (A.n_ != B.n_)
            throw ShapeMismatch("matrix product dimension mismatch");
        SmallComplexMatrix C(A.n_);
        for (std::size_t i = 0; i < A.n_; ++i)
            for (std::size_t k = 0; k < A.n_; ++k) {
                const cplx aik = A(i, k);
                for (std::size_t j = 0; j < A.n_; ++j)
                    C(i, j) += aik * B(k, j);
            }
        return C;
    }

    friend SmallComplexVector operator*(const SmallComplexMatrix& A,
                                        const SmallComplexVector& x) {
        if (A.n_ != x.size())
            throw ShapeMismatch("matrix-vector dimension mismatch");
        SmallComplexVector y(A.n_);
        for (std::size_t i = 0; i < A.n_; ++i) {
            cplx s{};
            for (std::size_t j = 0; j < A.n_; ++j)
                s += A(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

    friend SmallComplexMatrix operator-(const SmallComplexMatrix& A,
                                        const SmallComplexMatrix& B) {
        SmallComplexMatrix C(A.n_);
        for (std::size_t i = 0; i < A.n_; ++i)
            for (std::size_t j = 0; j < A.n_; ++j)
                C(i, j) = A(i, j) - B(i, j);
        return C;
    }

  private:
    std::size_t n_ = 0;
    std::array<cplx, kMaxDim * kMaxDim> a_{};
};

/// LU factorization with partial pivoting, P A = L U, L unit lower.
class LuDecomposition {
  public:
    explicit LuDecomposition(const SmallComplexMatrix& A) : lu_(A), n_(A.dim()) {
        for (std::size_t i = 0; i < n_; ++i)
            perm_[i] = i;
        for (std::size_t k = 0; k < n_; ++k) {
            std::size_t p = k;
            double best = std::abs(lu_(k, k));
            for (std::size_t i = k + 1; i < n_; ++i) {
                const double v = std::abs(lu_(i, k));
                if (v > best) {
                    best = v;
                    p = i;
                }
            }
            if (p != k) {
                for (std::size_t j = 0; j < n_; ++j)
                    std::swap(lu_(k, j), lu_(p, j));
                std::swap(perm_[k], perm_[p]);
            }
            const cplx pivot = lu_(k, k);
            if (pivot == cplx{}) {
                singular_ = true;
                continue;
            }
            for (std::size_t i = k + 1; i < n_; ++i) {
                const cplx l = lu_(i, k) / pivot;
                lu_(i, k) = l;
                for (std::size_t j = k + 1; j < n_; ++j)
                    lu_(i, j) -= l * lu_(k, j);
            }
        }
    }

    bool singular() const noexcept { return singular_; }
    std::size_t dim() const noexcept { return n_; }
    const SmallComplexMatrix& packed() const noexcept { return lu_; }

    /// Solves A x = b. Requires a nonsingular factorization.
    SmallComplexVector solve(const SmallComplexVector& b) const {
        SmallComplexVector x(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            cplx s = b[perm_[i]];
            for (std::size_t j = 0; j < i; ++j)
                s -= lu_(i, j) * x[j];
            x[i] = s;
        }
        for (std::size_t i = n_; i-- > 0;) {
            cplx s = x[i];
            for (std::size_t j = i + 1; j < n_; ++j)
                s -= lu_(i, j) * x[j];
            x[i] = s / lu_(i, i);
        }
        return x;
    }

    SmallComplexMatrix inverse() const {
        SmallComplexMatrix inv(n_);
        for (std::size_t c = 0; c < n_; ++c) {
            const auto col = solve(SmallComplexVector::unit(n_, c));
            for (std::size_t r = 0; r < n_; ++r)
                inv(r, c) = col[r];
        }
        return inv;
    }

    /// Sum of log|u_ii|, i.e. log|det A|.
    double log_abs_det() const noexcept {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            s += std::log(std::abs(lu_(i, i)));
        return s;
    }

  private:
    SmallComplexMatrix lu_;
    std::size_t n_;
    std::array<std::size_t, kMaxDim> perm_{};
    bool singular_ = false;
};

namespace detail {

inline void raise_singular(const char* op, double cond) {
    std::ostringstream os;
    os << op << ": matrix is singular or ill-conditioned (condition estimate "
       << cond << ")";
    throw SingularMatrix(os.str(), cond);
}

/// Factorizes A and returns its inverse, rejecting ill-conditioned input.
inline SmallComplexMatrix checked_inverse(const SmallComplexMatrix& A,
                                          const char* op) {
    const LuDecomposition lu(A);
    if (lu.singular())
        raise_singular(op, std::numeric_limits<double>::infinity());
    SmallComplexMatrix inv = lu.inverse();
    const double cond = A.norm1() * inv.norm1();
    if (!std::isfinite(cond) || cond > kMaxCondition)
        raise_singular(op, cond);
    return inv;
}

} // namespace detail

/// 1-norm condition number estimate ||A||_1 ||A^{-1}||_1 (infinite if singular).
inline double condition_estimate(const SmallComplexMatrix& A) {
    const LuDecomposition lu(A);
    if (lu.singular())
        return std::numeric_limits<double>::infinity();
    return A.norm1() * lu.inverse().norm1();
}

inline SmallComplexMatrix invert(const SmallComplexMatrix& A) {
    return detail::checked_inverse(A, "invert");
}

/// log det(A A^H) = 2 log|det A|. Throws only when A is exactly singular.
inline double log_abs_det_gram(const SmallComplexMatrix& A) {
    const LuDecomposition lu(A);
    if (lu.singular())
        detail::raise_singular("log_abs_det_gram",
                               std::numeric_limits<double>::infinity());
    return 2.0 * lu.log_abs_det();
}

/// Solves A x = e_m, i.e. returns column m of A^{-1}.
inline SmallComplexVector solve_column(const SmallComplexMatrix& A, std::size_t m) {
    if (m >= A.dim())
        throw InvalidArgument("solve_column: column index out of range");
    const LuDecomposition lu(A);
    if (lu.singular())
        detail::raise_singular("solve_column",
                               std::numeric_limits<double>::infinity());
    const auto x = lu.solve(SmallComplexVector::unit(A.dim(), m));
    // conditioning check uses the explicit inverse
    const double cond = A.norm1() * lu.inverse().norm1();
    if (!std::isfinite(cond) || cond > kMaxCondition)
        detail::raise_singular("solve_column", cond);
    return x;
}

/// x^H A x for Hermitian A (imaginary round-off discarded), accumulated in
/// extended precision.
inline double hermitian_form(const SmallComplexVector& x, const SmallComplexMatrix& A) {
    using lcplx = std::complex<long double>;
    lcplx s{};
    for (std::size_t i = 0; i < x.size(); ++i) {
        lcplx row{};
        for (std::size_t j = 0; j < x.size(); ++j)
            row += lcplx(A(i, j)) * lcplx(x[j]);
        s += std::conj(lcplx(x[i])) * row;
    }
    return static_cast<double>(s.real());
}

/// View of one (M x M) slice of a (F, M, M) tensor as a small matrix.
inline SmallComplexMatrix slice(const Tensor3<cplx>& t, std::size_t f) {
    const std::size_t n = t.extent(1);
    SmallComplexMatrix A(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            A(i, j) = t(f, i, j);
    return A;
}

inline void store(Tensor3<cplx>& t, std::size_t f, const SmallComplexMatrix& A) {
    const std::size_t n = A.dim();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            t(f, i, j) = A(i, j);
}

} // namespace gsmfast::linalg
