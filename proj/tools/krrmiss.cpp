#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "krrmiss/cli.hpp"

namespace {

std::optional<double> parse_auto(const std::string& flag, const std::string& text) {
    if (text == "auto") return std::nullopt;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty()) {
        throw krrmiss::InputError(flag + " expects 'auto' or a number, got '" + text + "'");
    }
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel ridge regression estimators of a mean under missing outcomes"};
    app.set_config("--config", "", "Flat key = value file mirroring the long flags; flags override it");
    app.require_subcommand(1);
    app.fallthrough();

    krrmiss::RunConfig rc;
    std::string lambda_text = "auto";
    std::string tau_text = "auto";
    std::string response_col;
    bool full_scale = false;

    app.add_option("--input", rc.input, "CSV file with a header row");
    app.add_option("--outcome-col", rc.outcome_column, "Outcome column; empty or NA cells are missing");
    app.add_option("--covariate-cols", rc.covariate_columns, "Covariate columns (default: all others)")->delimiter(',');
    app.add_option("--response-col", response_col, "0/1 response column (default: infer from missing outcomes)");
    app.add_option("--kernel", rc.kernel, "Kernel family")->check(CLI::IsMember({"sobolev2", "sobolev1", "gaussian"}));
    app.add_option("--lambda", lambda_text, "Ridge penalty, or auto for GCV");
    app.add_option("--tau", tau_text, "Density-ratio penalty, or auto for calibration");
    app.add_option("--level", rc.level, "Confidence level");
    app.add_option("--seed", rc.seed, "Base seed");
    app.add_option("--method", rc.methods, "Estimators: KRR_IM, KRR_PS, LINEAR_IM, COMPLETE")->delimiter(',');
    app.add_option("--gcv-denominator", rc.gcv_denominator, "GCV denominator power")
        ->check(CLI::IsMember({"linear", "squared"}));
    app.add_option("--output-dir", rc.output_dir, "Directory for output files");
    app.add_option("--model", rc.model, "Simulation outcome model")->check(CLI::IsMember({"A", "B", "C"}));
    app.add_option("--mechanism", rc.mechanism, "Simulation response mechanism")->check(CLI::IsMember({1, 2}));
    app.add_option("--n", rc.n, "Simulated sample size");
    app.add_option("--B", rc.replicates, "Monte Carlo replicates");
    app.add_flag("--full-scale", full_scale, "Use B = 1000 replicates");
    app.add_option("--threads", rc.threads, "Worker threads for simulate");

    auto* estimate = app.add_subcommand("estimate", "Point estimates, standard errors and intervals from a CSV");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo study on a simulated scenario");
    auto* weights = app.add_subcommand("weights", "Export fitted inverse-propensity weights per row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return krrmiss::exit_code::input_error;
    }

    try {
        rc.lambda = parse_auto("--lambda", lambda_text);
        rc.tau = parse_auto("--tau", tau_text);
        if (!response_col.empty()) rc.response_column = response_col;
        if (full_scale) rc.replicates = 1000;

        if (estimate->parsed()) {
            const auto report = krrmiss::cmd_estimate(rc);
            for (const auto& e : report["estimates"]) {
                std::cout << e["estimator"].get<std::string>() << ' ' << e["point_estimate"].get<double>() << " (SE "
                          << e["std_error"].get<double>() << ")\n";
            }
        } else if (simulate->parsed()) {
            const auto s = krrmiss::cmd_simulate(rc);
            for (const auto& e : s.estimators) {
                std::cout << krrmiss::to_string(e.method) << " mean " << e.mean_estimate << " RB "
                          << e.relative_bias << "% CR90 " << e.coverage_90 << " CR95 " << e.coverage_95 << '\n';
            }
        } else if (weights->parsed()) {
            (void)krrmiss::cmd_weights(rc);
        }
    } catch (const krrmiss::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return krrmiss::exit_code::input_error;
    } catch (const krrmiss::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return krrmiss::exit_code::numerical_failure;
    }
    return krrmiss::exit_code::success;
}
