#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <optional>
#include <string>

#include "krrmiss/error.hpp"
#include "krrmiss/kernels.hpp"
#include "krrmiss/ridge.hpp"

namespace krrmiss {

enum class Method {
    KrrImputation,     ///< KRR_IM
    KrrPropensity,     ///< KRR_PS
    LinearImputation,  ///< LINEAR_IM
    CompleteCase,      ///< respondent mean, no adjustment
};

[[nodiscard]] inline std::string to_string(Method m) {
    switch (m) {
        case Method::KrrImputation: return "KRR_IM";
        case Method::KrrPropensity: return "KRR_PS";
        case Method::LinearImputation: return "LINEAR_IM";
        case Method::CompleteCase: return "COMPLETE";
    }
    return "UNKNOWN";
}

[[nodiscard]] inline Method method_from_string(const std::string& s) {
    if (s == "KRR_IM" || s == "krr-im") return Method::KrrImputation;
    if (s == "KRR_PS" || s == "krr-ps") return Method::KrrPropensity;
    if (s == "LINEAR_IM" || s == "linear-im") return Method::LinearImputation;
    if (s == "COMPLETE" || s == "complete") return Method::CompleteCase;
    throw InputError("unknown method '" + s + "'");
}

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.0;

    [[nodiscard]] bool contains(double value) const { return lower <= value && value <= upper; }
};

struct EstimateReport {
    Method method = Method::KrrImputation;
    double theta_hat = 0.0;
    Vector influence;
    double variance = 0.0;
    double std_error = 0.0;
    ConfidenceInterval ci;
    std::optional<double> lambda;
    std::optional<double> tau;
};

namespace detail {

inline void check_aligned(const Vector& y, const ResponsePattern& delta, const Vector& other, const char* what) {
    if (delta.n() == 0) throw InputError(std::string(what) + ": empty sample");
    if (y.size() != delta.n() || other.size() != delta.n()) {
        throw InputError(std::string(what) + ": inputs are not aligned");
    }
    for (Index i : delta.respondents()) {
        if (!std::isfinite(y(i))) throw InputError(std::string(what) + ": non-finite outcome at respondent row " + std::to_string(i));
    }
}

}  // namespace detail

/// theta_I = n^-1 sum { delta_i y_i + (1 - delta_i) m-hat(x_i) }.
[[nodiscard]] inline double impute_estimate(const Vector& y, const ResponsePattern& delta, const Vector& mhat) {
    detail::check_aligned(y, delta, mhat, "impute_estimate");
    double total = 0.0;
    for (Index i = 0; i < delta.n(); ++i) total += delta.responded(i) ? y(i) : mhat(i);
    return total / static_cast<double>(delta.n());
}

/// theta_PS = n^-1 sum delta_i omega-hat(x_i) y_i.
[[nodiscard]] inline double ps_estimate(const Vector& y, const ResponsePattern& delta, const Vector& weights) {
    detail::check_aligned(y, delta, weights, "ps_estimate");
    double total = 0.0;
    for (Index i : delta.respondents()) total += weights(i) * y(i);
    return total / static_cast<double>(delta.n());
}

/// eta_i = m-hat(x_i) + delta_i omega-hat(x_i) {y_i - m-hat(x_i)}. Weights at
/// nonrespondents are ignored and may be NaN.
[[nodiscard]] inline Vector influence_values(const Vector& y, const ResponsePattern& delta, const Vector& mhat,
                                             const Vector& weights) {
    detail::check_aligned(y, delta, mhat, "influence_values");
    if (weights.size() != delta.n()) throw InputError("influence_values: weights are not aligned");
    Vector eta = mhat;
    for (Index i : delta.respondents()) {
        if (!std::isfinite(weights(i))) {
            throw InputError("influence_values: missing weight at respondent row " + std::to_string(i));
        }
        eta(i) += weights(i) * (y(i) - mhat(i));
    }
    return eta;
}

/// V = n^-1 (n - 1)^-1 sum (eta_i - mean(eta))^2.
[[nodiscard]] inline double variance_estimate(const Vector& eta) {
    const Index n = eta.size();
    if (n < 2) throw InputError("variance_estimate: need at least 2 values");
    const double mean = eta.mean();
    const double ss = (eta.array() - mean).square().sum();
    return ss / (static_cast<double>(n) * static_cast<double>(n - 1));
}

/// Standard normal quantile.
[[nodiscard]] inline double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

/// Wald interval theta +/- z_{(1+level)/2} sqrt(V).
[[nodiscard]] inline ConfidenceInterval confidence_interval(double theta_hat, double variance, double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence_interval: level must lie in (0,1)");
    if (!(variance >= 0.0)) throw InputError("confidence_interval: variance must be non-negative");
    const double half = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(variance);
    return {theta_hat - half, theta_hat + half, level};
}

[[nodiscard]] inline EstimateReport make_report(Method method, double theta_hat, Vector eta, double level) {
    EstimateReport r;
    r.method = method;
    r.theta_hat = theta_hat;
    r.variance = variance_estimate(eta);
    r.std_error = std::sqrt(r.variance);
    r.ci = confidence_interval(theta_hat, r.variance, level);
    r.influence = std::move(eta);
    return r;
}

/// Ordinary least squares (intercept + linear terms) on respondents,
/// predicted at every row.
[[nodiscard]] inline Vector linear_imputation_baseline(const Matrix& X, const Vector& y, const ResponsePattern& delta) {
    if (X.rows() != delta.n() || y.size() != delta.n()) throw InputError("linear baseline: inputs are not aligned");
    const Index p = X.cols() + 1;
    if (delta.n1() <= p) {
        throw InputError("linear baseline: need more than " + std::to_string(p) + " respondents");
    }
    Matrix design(X.rows(), p);
    design.col(0).setOnes();
    design.rightCols(X.cols()) = X;
    const auto& resp = delta.respondents();
    const Matrix Dr = design(resp, Eigen::all);
    Eigen::ColPivHouseholderQR<Matrix> qr(Dr);
    if (qr.rank() < p) throw NumericalError("linear baseline: rank-deficient design on respondents");
    const Vector coef = qr.solve(Vector(y(resp)));
    return design * coef;
}

}  // namespace krrmiss
