#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "krrmiss/balance.hpp"
#include "krrmiss/error.hpp"
#include "krrmiss/estimate.hpp"
#include "krrmiss/kernels.hpp"
#include "krrmiss/ridge.hpp"

namespace krrmiss {

struct PipelineConfig {
    KernelSpec kernel = KernelSpec::sobolev(2);
    GcvDenominator gcv_denominator = GcvDenominator::Squared;
    std::optional<double> lambda;      ///< fixed lambda; GCV over the grid otherwise
    std::vector<double> lambda_grid;   ///< empty selects `default_lambda_grid`
    std::optional<double> kappa;
    std::optional<double> tau;         ///< fixed tau; D(tau) over the grid otherwise
    std::vector<double> tau_grid;      ///< empty selects `default_tau_grid`
    OptimizerConfig optimizer;
    double level = 0.95;
};

struct PipelineResult {
    std::optional<FittedRegression> regression;
    std::optional<TauSelection> balance;   ///< absent when every unit responded
    Vector mhat;
    Vector weights;                        ///< omega-hat at every training row
    std::vector<EstimateReport> estimates;
    std::vector<std::string> warnings;

    [[nodiscard]] const EstimateReport& estimate(Method m) const {
        for (const auto& e : estimates) {
            if (e.method == m) return e;
        }
        throw InputError("pipeline: method " + to_string(m) + " was not requested");
    }
};

/// Step 1 fits m-hat by kernel ridge regression; step 2 fits the density
/// ratio whose tau minimizes the calibration discrepancy of m-hat. The
/// requested estimators are then assembled from m-hat and omega-hat.
[[nodiscard]] inline PipelineResult run_two_step(const Matrix& X, const Vector& y, const ResponsePattern& delta,
                                                 const PipelineConfig& config, const std::vector<Method>& methods) {
    if (X.rows() != delta.n() || y.size() != delta.n()) throw InputError("pipeline: inputs are not aligned");
    if (delta.n1() < 1) throw InputError("pipeline: no respondents");
    if (!(config.level > 0.0 && config.level < 1.0)) throw InputError("pipeline: level must lie in (0,1)");

    PipelineResult out;
    const bool kernel_needed = std::any_of(methods.begin(), methods.end(), [](Method m) {
        return m != Method::CompleteCase;
    });

    if (kernel_needed) {
        const KernelDesign design(X, config.kernel, delta.respondents());
        // Centering at the respondent mean keeps m-hat equivariant under shifts of y.
        const double offset = y(delta.respondents()).mean();
        const Vector yc = (y.array() - offset).matrix();
        double lambda = 0.0;
        TuningPath gcv_path;
        if (config.lambda) {
            lambda = *config.lambda;
        } else {
            const auto grid = config.lambda_grid.empty() ? default_lambda_grid(delta.n1(), delta.n(), config.kappa)
                                                         : config.lambda_grid;
            auto sel = select_lambda(design, yc, delta, grid, config.gcv_denominator);
            lambda = sel.lambda;
            gcv_path = std::move(sel.path);
        }
        out.regression = fit_krr(design, yc, delta, lambda);
        out.regression->gcv_path = std::move(gcv_path);
        out.regression->offset = offset;
        out.regression->fitted_values.array() += offset;
        out.mhat = out.regression->fitted_values;

        if (delta.n0() == 0) {
            out.weights = Vector::Ones(delta.n());
        } else {
            TauSelection sel;
            if (config.tau) {
                sel.fit = fit_density_ratio(design, delta, *config.tau, config.optimizer);
                sel.tau = *config.tau;
                if (!sel.fit.report.converged) {
                    std::ostringstream os;
                    os << "density-ratio fit at tau = " << *config.tau << " did not converge: " << sel.fit.report.message;
                    sel.warnings.push_back(os.str());
                }
                sel.d_path.emplace_back(sel.tau, calibration_discrepancy(sel.fit.model, out.mhat));
            } else {
                const auto grid = config.tau_grid.empty() ? default_tau_grid(delta.n1()) : config.tau_grid;
                sel = select_tau(design, delta, out.mhat, grid, config.optimizer);
            }
            out.weights = sel.fit.model.training_weights();
            out.warnings.insert(out.warnings.end(), sel.warnings.begin(), sel.warnings.end());
            out.balance = std::move(sel);
        }
    }

    const auto tuned = [&](EstimateReport r) {
        if (out.regression) r.lambda = out.regression->lambda;
        if (out.balance) r.tau = out.balance->tau;
        return r;
    };

    for (Method m : methods) {
        switch (m) {
            case Method::KrrImputation: {
                const double theta = impute_estimate(y, delta, out.mhat);
                out.estimates.push_back(tuned(make_report(m, theta, influence_values(y, delta, out.mhat, out.weights), config.level)));
                break;
            }
            case Method::KrrPropensity: {
                const double theta = ps_estimate(y, delta, out.weights);
                out.estimates.push_back(tuned(make_report(m, theta, influence_values(y, delta, out.mhat, out.weights), config.level)));
                break;
            }
            case Method::LinearImputation: {
                const Vector lin = linear_imputation_baseline(X, y, delta);
                const double theta = impute_estimate(y, delta, lin);
                out.estimates.push_back(tuned(make_report(m, theta, influence_values(y, delta, lin, out.weights), config.level)));
                break;
            }
            case Method::CompleteCase: {
                if (delta.n1() < 2) throw InputError("complete-case estimate: need at least 2 respondents");
                const Vector observed = y(delta.respondents());
                out.estimates.push_back(make_report(m, observed.mean(), observed, config.level));
                break;
            }
        }
    }
    return out;
}

}  // namespace krrmiss
