#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "krrmiss/error.hpp"
#include "krrmiss/kernels.hpp"

namespace krrmiss {

/// Response indicators delta_i in {0,1} with cached index sets.
class ResponsePattern {
public:
    ResponsePattern() = default;

    explicit ResponsePattern(const std::vector<int>& delta) {
        indicator_.resize(static_cast<Index>(delta.size()));
        for (std::size_t i = 0; i < delta.size(); ++i) {
            if (delta[i] != 0 && delta[i] != 1) {
                throw InputError("response indicator at row " + std::to_string(i) + " must be 0 or 1");
            }
            indicator_(static_cast<Index>(i)) = delta[i];
            (delta[i] == 1 ? respondents_ : nonrespondents_).push_back(static_cast<Index>(i));
        }
    }

    static ResponsePattern all_respond(Index n) { return ResponsePattern(std::vector<int>(static_cast<std::size_t>(n), 1)); }

    [[nodiscard]] Index n() const { return indicator_.size(); }
    [[nodiscard]] Index n1() const { return static_cast<Index>(respondents_.size()); }
    [[nodiscard]] Index n0() const { return static_cast<Index>(nonrespondents_.size()); }
    [[nodiscard]] bool responded(Index i) const { return indicator_(i) == 1.0; }
    /// delta as a 0/1 vector.
    [[nodiscard]] const Vector& indicator() const { return indicator_; }
    [[nodiscard]] const std::vector<Index>& respondents() const { return respondents_; }
    [[nodiscard]] const std::vector<Index>& nonrespondents() const { return nonrespondents_; }

private:
    Vector indicator_;
    std::vector<Index> respondents_;
    std::vector<Index> nonrespondents_;
};

enum class GcvDenominator {
    Linear,   ///< n^-1 tr(Delta - A)
    Squared,  ///< [n^-1 tr(Delta - A)]^2
};

using TuningPath = std::vector<std::pair<double, double>>;

/// Kernel ridge regression fitted on respondents.
struct FittedRegression {
    Vector coefficients;      ///< length n; exactly zero at nonrespondents
    double lambda = 0.0;
    Matrix training_points;   ///< rescaled covariates, n x d
    UnitRescaler rescaler;
    KernelSpec kernel;        ///< resolved
    TuningPath gcv_path;      ///< (lambda, GCV) pairs when lambda was selected
    Vector fitted_values;     ///< m-hat(x_i) for every training row
    double offset = 0.0;      ///< added to every prediction

    /// m-hat at raw covariate rows.
    [[nodiscard]] Vector predict(const Matrix& raw) const {
        if (raw.cols() != training_points.cols()) {
            throw InputError("predict: expected " + std::to_string(training_points.cols()) +
                             " covariates, got " + std::to_string(raw.cols()));
        }
        return (cross_gram(rescaler.apply(raw), training_points, kernel) * coefficients).array() + offset;
    }

    [[nodiscard]] double predict_point(const Vector& raw) const {
        return predict(Matrix(raw.transpose()))(0);
    }
};

namespace detail {

inline void check_regression_inputs(const KernelDesign& design, const Vector& y, const ResponsePattern& delta) {
    if (y.size() != design.size() || delta.n() != design.size()) {
        throw InputError("ridge: size mismatch between covariates (" + std::to_string(design.size()) +
                         "), outcomes (" + std::to_string(y.size()) + ") and indicators (" +
                         std::to_string(delta.n()) + ")");
    }
    if (delta.n1() == 0) throw InputError("ridge: no respondents");
    for (Index i : delta.respondents()) {
        if (!std::isfinite(y(i))) {
            throw InputError("ridge: non-finite outcome at respondent row " + std::to_string(i));
        }
    }
}

/// Cholesky of K_rr + lambda I with a single jitter retry.
inline Eigen::LLT<Matrix> factor_shifted(const Matrix& Krr, double lambda) {
    Matrix M = Krr;
    M.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() == Eigen::Success) return llt;
    const double jitter = 1e-10 * Krr.trace() / static_cast<double>(Krr.rows());
    M.diagonal().array() += jitter;
    llt.compute(M);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("ridge: K_rr + lambda I is not positive definite (lambda = " +
                             std::to_string(lambda) + ")");
    }
    return llt;
}

inline Vector gather(const Vector& v, const std::vector<Index>& idx) { return v(idx); }

}  // namespace detail

/// Solves (Delta K + lambda I) alpha = Delta y through the equivalent
/// symmetric respondent system (K_rr + lambda I) alpha_r = y_r.
[[nodiscard]] inline FittedRegression fit_krr(const KernelDesign& design, const Vector& y,
                                              const ResponsePattern& delta, double lambda) {
    if (!(lambda > 0.0)) throw InputError("fit_krr: lambda must be positive");
    detail::check_regression_inputs(design, y, delta);
    const auto& resp = delta.respondents();
    const Matrix Krr = design.gram()(resp, resp);
    const Vector alpha_r = detail::factor_shifted(Krr, lambda).solve(detail::gather(y, resp));

    FittedRegression fit;
    fit.coefficients = Vector::Zero(design.size());
    fit.coefficients(resp) = alpha_r;
    fit.lambda = lambda;
    fit.training_points = design.points();
    fit.rescaler = design.rescaler();
    fit.kernel = design.kernel();
    fit.fitted_values = design.gram()(Eigen::all, resp) * alpha_r;
    return fit;
}

/// GCV(lambda) = [n^-1 ||(Delta - A) y||^2] / [n^-1 tr(Delta - A)]^p with
/// A = Delta K (Delta K + lambda I)^-1 Delta. On respondents A reduces to
/// S = K_rr (K_rr + lambda I)^-1, so (I - S) y_r = lambda (K_rr + lambda I)^-1 y_r
/// and tr(I - S) = lambda tr((K_rr + lambda I)^-1).
[[nodiscard]] inline double gcv_score(const KernelDesign& design, const Vector& y, const ResponsePattern& delta,
                                      double lambda, GcvDenominator denominator = GcvDenominator::Squared) {
    if (!(lambda > 0.0)) throw InputError("gcv_score: lambda must be positive");
    detail::check_regression_inputs(design, y, delta);
    if (delta.n1() < 2) throw InputError("gcv_score: need at least 2 respondents");
    const auto& resp = delta.respondents();
    const Matrix Krr = design.gram()(resp, resp);
    const auto llt = detail::factor_shifted(Krr, lambda);
    const Vector residual = lambda * llt.solve(detail::gather(y, resp));
    const double trace = lambda * llt.solve(Matrix::Identity(Krr.rows(), Krr.cols())).trace();
    if (!(trace > 0.0)) throw NumericalError("gcv_score: tr(Delta - A) <= 0 (degenerate smoother)");
    const double n = static_cast<double>(design.size());
    const double numer = residual.squaredNorm() / n;
    const double denom = trace / n;
    return numer / (denominator == GcvDenominator::Squared ? denom * denom : denom);
}

/// GCV over many lambda values from one eigendecomposition of K_rr.
class GcvCurve {
public:
    GcvCurve(const KernelDesign& design, const Vector& y, const ResponsePattern& delta,
             GcvDenominator denominator = GcvDenominator::Squared)
        : denominator_(denominator), n_(static_cast<double>(design.size())) {
        detail::check_regression_inputs(design, y, delta);
        if (delta.n1() < 2) throw InputError("gcv: need at least 2 respondents");
        const auto& resp = delta.respondents();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(design.gram()(resp, resp));
        if (eig.info() != Eigen::Success) throw NumericalError("gcv: eigendecomposition failed");
        eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
        projected_ = eig.eigenvectors().transpose() * detail::gather(y, resp);
    }

    [[nodiscard]] double operator()(double lambda) const {
        if (!(lambda > 0.0)) throw InputError("gcv: lambda must be positive");
        const Eigen::ArrayXd shrink = lambda / (eigenvalues_.array() + lambda);
        const double trace = shrink.sum();
        if (!(trace > 0.0)) throw NumericalError("gcv: tr(Delta - A) <= 0 (degenerate smoother)");
        const double numer = (shrink * projected_.array()).square().sum() / n_;
        const double denom = trace / n_;
        return numer / (denominator_ == GcvDenominator::Squared ? denom * denom : denom);
    }

private:
    GcvDenominator denominator_;
    double n_;
    Vector eigenvalues_;
    Vector projected_;
};

/// `count` log-spaced values on [lo, hi].
[[nodiscard]] inline std::vector<double> log_grid(double lo, double hi, int count) {
    if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw InputError("log_grid: need 0 < lo <= hi and count >= 1");
    std::vector<double> grid(static_cast<std::size_t>(count));
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (int k = 0; k < count; ++k) {
        const double t = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
        grid[static_cast<std::size_t>(k)] = std::pow(10.0, a + t * (b - a));
    }
    return grid;
}

/// 40 log-spaced points on [1e-6, 1e4] / n1. When `kappa` is given only
/// values lambda <= n^-kappa are kept.
[[nodiscard]] inline std::vector<double> default_lambda_grid(Index n1, Index n, std::optional<double> kappa = std::nullopt) {
    if (n1 < 1) throw InputError("lambda grid: need at least one respondent");
    const double scale = 1.0 / static_cast<double>(n1);
    std::vector<double> grid = log_grid(1e-6 * scale, 1e4 * scale, 40);
    if (kappa) {
        if (!(*kappa > 1.0)) throw InputError("lambda grid: kappa must exceed 1");
        const double cap = std::pow(static_cast<double>(n), -*kappa);
        std::erase_if(grid, [cap](double v) { return v > cap; });
        if (grid.empty()) throw InputError("lambda grid: kappa restriction removes every grid point");
    }
    return grid;
}

struct LambdaSelection {
    double lambda = 0.0;
    TuningPath path;
};

/// Grid minimizer of GCV; ties go to the smallest lambda.
[[nodiscard]] inline LambdaSelection select_lambda(const KernelDesign& design, const Vector& y,
                                                   const ResponsePattern& delta, const std::vector<double>& grid,
                                                   GcvDenominator denominator = GcvDenominator::Squared) {
    if (grid.empty()) throw InputError("select_lambda: empty grid");
    for (double v : grid) {
        if (!(v > 0.0)) throw InputError("select_lambda: grid values must be positive");
    }
    const GcvCurve curve(design, y, delta, denominator);
    LambdaSelection out;
    out.path.reserve(grid.size());
    double best = 0.0;
    bool have = false;
    for (double lambda : grid) {
        const double score = curve(lambda);
        out.path.emplace_back(lambda, score);
        if (!have || score < best || (score == best && lambda < out.lambda)) {
            best = score;
            out.lambda = lambda;
            have = true;
        }
    }
    return out;
}

}  // namespace krrmiss
