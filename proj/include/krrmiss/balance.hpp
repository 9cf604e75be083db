#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "krrmiss/error.hpp"
#include "krrmiss/kernels.hpp"
#include "krrmiss/ridge.hpp"

namespace krrmiss {

/// Largest |phi_0 + (K phi_s)_i| allowed before exponentiation.
inline constexpr double kLinearPredictorLimit = 35.0;

struct OptimizerConfig {
    double gradient_tolerance = 1e-6;
    int max_iterations = 500;
    double sufficient_decrease = 1e-4;
    double min_step = 1e-12;
    /// Stop once this many consecutive accepted steps are shorter than
    /// `short_step`; this happens when the optimum lies beyond the
    /// linear-predictor limit and the iterates creep along it.
    int stall_iterations = 20;
    double short_step = 1e-3;
};

struct OptimizerReport {
    int iterations = 0;
    double final_gradient_norm = 0.0;
    bool converged = false;
    double objective_value = 0.0;
    std::string message;
};

/// Log-linear density ratio g(x) = exp(phi0 + sum_j phi_j K(x, x_j)) between
/// nonrespondent and respondent covariate distributions.
struct DensityRatioModel {
    double phi0 = 0.0;
    Vector phi_s;
    double tau = 0.0;
    Matrix training_points;
    UnitRescaler rescaler;
    KernelSpec kernel;
    Index n0 = 0;
    Index n1 = 0;
    double ratio_c = 0.0;          ///< n0 / n1
    Vector training_indicator;     ///< delta on the training rows
    Vector training_ratio;         ///< g-hat(x_i) on the training rows

    [[nodiscard]] Vector density_ratio(const Matrix& raw) const {
        const Vector eta = (cross_gram(rescaler.apply(raw), training_points, kernel) * phi_s).array() + phi0;
        return eta.array().exp().matrix();
    }

    /// omega-hat(x) = 1 + (n0/n1) g-hat(x).
    [[nodiscard]] Vector weights(const Matrix& raw) const {
        return (1.0 + ratio_c * density_ratio(raw).array()).matrix();
    }

    [[nodiscard]] Vector training_weights() const { return (1.0 + ratio_c * training_ratio.array()).matrix(); }

    /// (1/n1) sum_i delta_i g-hat(x_i); equals 1 at a stationary point.
    [[nodiscard]] double normalization() const {
        return training_indicator.dot(training_ratio) / static_cast<double>(n1);
    }
};

[[nodiscard]] inline double weight(const DensityRatioModel& model, const Vector& raw_point) {
    return model.weights(Matrix(raw_point.transpose()))(0);
}

namespace detail {

inline void check_entropy_inputs(const Vector& phi, const Matrix& K, const ResponsePattern& delta, double tau) {
    if (K.rows() != K.cols() || K.rows() != delta.n()) throw InputError("entropy: Gram/indicator size mismatch");
    if (phi.size() != delta.n() + 1) {
        throw InputError("entropy: phi must have n + 1 = " + std::to_string(delta.n() + 1) + " entries");
    }
    if (delta.n0() < 1 || delta.n1() < 1) throw InputError("entropy: need at least one respondent and one nonrespondent");
    if (!(tau >= 0.0)) throw InputError("entropy: tau must be non-negative");
}

inline Vector linear_predictor(const Vector& phi, const Matrix& K) {
    return (K * phi.tail(phi.size() - 1)).array() + phi(0);
}

/// Objective from a precomputed linear predictor and K phi_s; empty when the
/// predictor exceeds the exponentiation limit.
inline std::optional<double> entropy_value(const Vector& eta, const Vector& phi_s, const Vector& kphi,
                                           const ResponsePattern& delta, double tau) {
    if (eta.cwiseAbs().maxCoeff() > kLinearPredictorLimit) return std::nullopt;
    const Vector& d = delta.indicator();
    const double resp = d.dot(eta.array().exp().matrix()) / static_cast<double>(delta.n1());
    const double nonresp = (1.0 - d.array()).matrix().dot(eta) / static_cast<double>(delta.n0());
    return resp - nonresp + tau * phi_s.dot(kphi);
}

inline std::string overflow_message(const Vector& eta) {
    std::ostringstream os;
    os << "entropy: linear predictor magnitude " << eta.cwiseAbs().maxCoeff() << " exceeds "
       << kLinearPredictorLimit;
    return os.str();
}

}  // namespace detail

/// U(phi) = (1/n1) sum delta_i g_i - (1/n0) sum (1 - delta_i) log g_i + tau phi_s' K phi_s.
[[nodiscard]] inline double entropy_objective(const Vector& phi, const Matrix& K, const ResponsePattern& delta,
                                              double tau) {
    detail::check_entropy_inputs(phi, K, delta, tau);
    const Vector phi_s = phi.tail(phi.size() - 1);
    const Vector kphi = K * phi_s;
    const Vector eta = kphi.array() + phi(0);
    const auto value = detail::entropy_value(eta, phi_s, kphi, delta, tau);
    if (!value) throw NumericalError(detail::overflow_message(eta));
    return *value;
}

/// Gradient of `entropy_objective`; entry 0 is d/d phi0.
[[nodiscard]] inline Vector entropy_gradient(const Vector& phi, const Matrix& K, const ResponsePattern& delta,
                                             double tau) {
    detail::check_entropy_inputs(phi, K, delta, tau);
    const Vector phi_s = phi.tail(phi.size() - 1);
    const Vector eta = (K * phi_s).array() + phi(0);
    if (eta.cwiseAbs().maxCoeff() > kLinearPredictorLimit) throw NumericalError(detail::overflow_message(eta));
    const Vector& d = delta.indicator();
    const Vector w = (d.array() * eta.array().exp()).matrix() / static_cast<double>(delta.n1());
    const Vector r = w - (1.0 - d.array()).matrix() / static_cast<double>(delta.n0()) + 2.0 * tau * phi_s;
    Vector grad(phi.size());
    grad(0) = w.sum() - 1.0;
    grad.tail(phi.size() - 1) = K * r;
    return grad;
}

struct DensityRatioFit {
    DensityRatioModel model;
    OptimizerReport report;
};

/// Minimizes the penalized entropy dual jointly over (phi0, phi_s), starting
/// at phi = 0, by damped Newton steps with Armijo backtracking.
///
/// The Hessian is H = [[a, w'K], [K w, K W K + 2 tau K]] with w = delta g / n1.
/// Because every phi_s row carries a factor K, the Newton system reduces to
/// W K p_s + w p0 + 2 tau p_s = -r: nonrespondent components are explicit and
/// the respondent block is the SPD system (K_RR + 2 tau W_R^-1) p_R = b.
[[nodiscard]] inline DensityRatioFit fit_density_ratio(const KernelDesign& design, const ResponsePattern& delta,
                                                       double tau, const OptimizerConfig& config = {}) {
    if (!(tau > 0.0)) throw InputError("fit_density_ratio: tau must be positive");
    if (delta.n() != design.size()) throw InputError("fit_density_ratio: indicator/design size mismatch");
    if (delta.n0() < 1 || delta.n1() < 1) {
        throw InputError("fit_density_ratio: need at least one respondent and one nonrespondent");
    }

    const Matrix& K = design.gram();
    const Index n = delta.n();
    const auto& resp = delta.respondents();
    const auto& nonresp = delta.nonrespondents();
    const double n1 = static_cast<double>(delta.n1());
    const double n0 = static_cast<double>(delta.n0());
    const Vector& d = delta.indicator();
    const Matrix K_rr = K(resp, resp);
    const Matrix K_rn = K(resp, nonresp);

    Vector phi = Vector::Zero(n + 1);
    Vector kphi = Vector::Zero(n);
    Vector eta = Vector::Zero(n);
    double value = *detail::entropy_value(eta, phi.tail(n), kphi, delta, tau);

    OptimizerReport report;
    int short_steps = 0;
    for (int iter = 0;; ++iter) {
        const Vector w = (d.array() * eta.array().exp()).matrix() / n1;
        const Vector r = w - (1.0 - d.array()).matrix() / n0 + 2.0 * tau * phi.tail(n);
        Vector grad(n + 1);
        grad(0) = w.sum() - 1.0;
        grad.tail(n) = K * r;
        report.iterations = iter;
        report.final_gradient_norm = grad.norm();
        report.objective_value = value;
        if (report.final_gradient_norm < config.gradient_tolerance) {
            report.converged = true;
            break;
        }
        if (iter >= config.max_iterations) {
            report.message = "iteration limit reached";
            break;
        }

        const Vector w_r = w(resp);
        const Vector p_n = -r(nonresp) / (2.0 * tau);
        Matrix M = K_rr;
        M.diagonal().array() += 2.0 * tau / w_r.array();
        Eigen::LLT<Matrix> llt(M);
        Vector step(n + 1);
        bool newton = llt.info() == Eigen::Success;
        if (newton) {
            const Vector krn_pn = K_rn * p_n;
            const Vector b = (-r(resp).array() / w_r.array()).matrix() - krn_pn;
            const Vector u = llt.solve(b);
            const Vector v = llt.solve(Vector::Ones(delta.n1()));
            const double p0 = (-grad(0) - w_r.dot(K_rr * u + krn_pn)) / (2.0 * tau * v.sum());
            step(0) = p0;
            step.tail(n)(resp) = u - v * p0;
            step.tail(n)(nonresp) = p_n;
            newton = step.allFinite() && grad.dot(step) < 0.0;
        }
        if (!newton) step = -grad;

        const double slope = grad.dot(step);
        double t = 1.0;
        bool accepted = false;
        Vector trial_phi;
        Vector trial_kphi;
        Vector trial_eta;
        double trial_value = 0.0;
        while (t >= config.min_step) {
            trial_phi = phi + t * step;
            trial_kphi = K * trial_phi.tail(n);
            trial_eta = trial_kphi.array() + trial_phi(0);
            const auto v = detail::entropy_value(trial_eta, trial_phi.tail(n), trial_kphi, delta, tau);
            if (v && *v <= value + config.sufficient_decrease * t * slope && *v < value) {
                trial_value = *v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            report.message = "line search failed to decrease the objective";
            break;
        }
        short_steps = t < config.short_step ? short_steps + 1 : 0;
        phi = std::move(trial_phi);
        kphi = std::move(trial_kphi);
        eta = std::move(trial_eta);
        value = trial_value;
        if (short_steps >= config.stall_iterations) {
            report.iterations = iter + 1;
            report.objective_value = value;
            report.message = "stalled against the linear-predictor limit";
            break;
        }
    }

    DensityRatioFit fit;
    auto& m = fit.model;
    m.phi0 = phi(0);
    m.phi_s = phi.tail(n);
    m.tau = tau;
    m.training_points = design.points();
    m.rescaler = design.rescaler();
    m.kernel = design.kernel();
    m.n0 = delta.n0();
    m.n1 = delta.n1();
    m.ratio_c = n0 / n1;
    m.training_indicator = d;
    m.training_ratio = eta.array().exp().matrix();
    fit.report = report;
    if (report.converged && std::abs(m.normalization() - 1.0) > 1e-5) {
        fit.report.converged = false;
        fit.report.message = "normalization identity violated at the returned optimum";
    }
    return fit;
}

/// D(tau) = | n^-1 sum delta_i omega-hat(x_i) m-hat(x_i) - n^-1 sum m-hat(x_i) |.
[[nodiscard]] inline double calibration_discrepancy(const DensityRatioModel& model, const Vector& mhat) {
    if (mhat.size() != model.training_ratio.size()) throw InputError("calibration_discrepancy: size mismatch");
    const double n = static_cast<double>(mhat.size());
    const Vector w = model.training_weights();
    const double weighted = (model.training_indicator.array() * w.array() * mhat.array()).sum() / n;
    return std::abs(weighted - mhat.mean());
}

/// 20 log-spaced points on [1e-6, 1] / n1.
[[nodiscard]] inline std::vector<double> default_tau_grid(Index n1) {
    if (n1 < 1) throw InputError("tau grid: need at least one respondent");
    const double scale = 1.0 / static_cast<double>(n1);
    return log_grid(1e-6 * scale, scale, 20);
}

struct TauSelection {
    double tau = 0.0;
    DensityRatioFit fit;
    TuningPath d_path;   ///< (tau, D(tau)) for converged fits
    std::vector<std::string> warnings;
};

/// Grid minimizer of D(tau) over converged fits; ties go to the smaller tau.
[[nodiscard]] inline TauSelection select_tau(const KernelDesign& design, const ResponsePattern& delta,
                                             const Vector& mhat, const std::vector<double>& grid,
                                             const OptimizerConfig& config = {}) {
    if (grid.empty()) throw InputError("select_tau: empty grid");
    if (mhat.size() != delta.n()) throw InputError("select_tau: m-hat size mismatch");
    TauSelection out;
    double best = 0.0;
    bool have = false;
    for (double tau : grid) {
        DensityRatioFit fit = fit_density_ratio(design, delta, tau, config);
        if (!fit.report.converged) {
            std::ostringstream os;
            os << "tau = " << tau << " skipped: " << fit.report.message << " (gradient norm "
               << fit.report.final_gradient_norm << ")";
            out.warnings.push_back(os.str());
            continue;
        }
        const double D = calibration_discrepancy(fit.model, mhat);
        out.d_path.emplace_back(tau, D);
        if (!have || D < best || (D == best && tau < out.tau)) {
            best = D;
            out.tau = tau;
            out.fit = std::move(fit);
            have = true;
        }
    }
    if (!have) throw NumericalError("select_tau: no density-ratio fit converged on the tau grid");
    return out;
}

}  // namespace krrmiss
