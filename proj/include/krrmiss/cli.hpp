#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include "krrmiss/dataset.hpp"
#include "krrmiss/error.hpp"
#include "krrmiss/estimate.hpp"
#include "krrmiss/pipeline.hpp"
#include "krrmiss/simlab.hpp"

namespace krrmiss {

/// Command parameters after flag and config-file parsing.
struct RunConfig {
    std::filesystem::path input;
    std::string outcome_column;
    std::vector<std::string> covariate_columns;
    std::optional<std::string> response_column;
    std::string kernel = "sobolev2";
    std::optional<double> lambda;   ///< absent: "auto"
    std::optional<double> tau;      ///< absent: "auto"
    double level = 0.95;
    std::uint64_t seed = 1;
    std::vector<std::string> methods = {"KRR_IM", "KRR_PS"};
    std::string gcv_denominator = "squared";
    std::filesystem::path output_dir = ".";

    std::string model = "A";
    int mechanism = 1;
    Index n = 500;
    Index replicates = 200;
    unsigned threads = 1;
};

/// Exit statuses shared by every subcommand.
namespace exit_code {
inline constexpr int success = 0;
inline constexpr int input_error = 2;
inline constexpr int numerical_failure = 3;
}  // namespace exit_code

[[nodiscard]] inline KernelSpec kernel_from_name(const std::string& name) {
    if (name == "sobolev2") return KernelSpec::sobolev(2);
    if (name == "sobolev1") return KernelSpec::sobolev(1);
    if (name == "gaussian") return KernelSpec::gaussian();
    throw InputError("unknown kernel '" + name + "' (expected sobolev2, sobolev1 or gaussian)");
}

[[nodiscard]] inline GcvDenominator gcv_denominator_from_name(const std::string& name) {
    if (name == "squared") return GcvDenominator::Squared;
    if (name == "linear") return GcvDenominator::Linear;
    throw InputError("unknown GCV denominator '" + name + "' (expected linear or squared)");
}

[[nodiscard]] inline OutcomeModel model_from_name(const std::string& name) {
    if (name == "A" || name == "a") return OutcomeModel::A;
    if (name == "B" || name == "b") return OutcomeModel::B;
    if (name == "C" || name == "c") return OutcomeModel::C;
    throw InputError("unknown model '" + name + "' (expected A, B or C)");
}

[[nodiscard]] inline ResponseMechanism mechanism_from_number(int m) {
    if (m == 1) return ResponseMechanism::First;
    if (m == 2) return ResponseMechanism::Second;
    throw InputError("unknown response mechanism " + std::to_string(m) + " (expected 1 or 2)");
}

[[nodiscard]] inline PipelineConfig pipeline_config(const RunConfig& rc) {
    if (!(rc.level > 0.0 && rc.level < 1.0)) throw InputError("--level must lie in (0,1)");
    if (rc.lambda && !(*rc.lambda > 0.0)) throw InputError("--lambda must be positive");
    if (rc.tau && !(*rc.tau > 0.0)) throw InputError("--tau must be positive");
    PipelineConfig pc;
    pc.kernel = kernel_from_name(rc.kernel);
    pc.gcv_denominator = gcv_denominator_from_name(rc.gcv_denominator);
    pc.lambda = rc.lambda;
    pc.tau = rc.tau;
    pc.level = rc.level;
    return pc;
}

[[nodiscard]] inline std::vector<Method> methods_from_names(const std::vector<std::string>& names) {
    if (names.empty()) throw InputError("no estimation method requested");
    std::vector<Method> out;
    for (const auto& s : names) {
        const Method m = method_from_string(s);
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    return out;
}

[[nodiscard]] inline Dataset load_dataset(const RunConfig& rc) {
    if (rc.input.empty()) throw InputError("--input is required");
    if (rc.outcome_column.empty()) throw InputError("--outcome-col is required");
    return ingest_csv(rc.input, CsvSchema{rc.outcome_column, rc.covariate_columns, rc.response_column});
}

namespace detail {

inline nlohmann::json path_json(const TuningPath& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [param, score] : path) j.push_back({param, score});
    return j;
}

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace detail

[[nodiscard]] inline nlohmann::json report_to_json(const Dataset& data, const PipelineResult& fit,
                                                   const RunConfig& rc) {
    nlohmann::json j;
    j["n"] = data.size();
    j["respondents"] = data.delta.n1();
    j["outcome"] = data.outcome_name;
    j["covariates"] = data.covariate_names;
    j["kernel"] = rc.kernel;
    j["level"] = rc.level;
    j["seed"] = rc.seed;

    nlohmann::json ests = nlohmann::json::array();
    for (const auto& e : fit.estimates) {
        ests.push_back({{"estimator", to_string(e.method)},
                        {"point_estimate", e.theta_hat},
                        {"std_error", e.std_error},
                        {"ci_lower", e.ci.lower},
                        {"ci_upper", e.ci.upper}});
    }
    j["estimates"] = ests;

    nlohmann::json diag;
    if (fit.regression) {
        diag["lambda"] = fit.regression->lambda;
        diag["gcv_path"] = detail::path_json(fit.regression->gcv_path);
        diag["gcv_denominator"] = rc.gcv_denominator;
    }
    if (fit.balance) {
        const auto& rep = fit.balance->fit.report;
        diag["tau"] = fit.balance->tau;
        diag["d_path"] = detail::path_json(fit.balance->d_path);
        diag["optimizer"] = {{"iterations", rep.iterations},
                             {"final_gradient_norm", rep.final_gradient_norm},
                             {"converged", rep.converged},
                             {"objective_value", rep.objective_value}};
        diag["normalization"] = fit.balance->fit.model.normalization();
    }
    diag["warnings"] = fit.warnings;
    j["diagnostics"] = diag;
    return j;
}

/// Two-step estimation on a CSV; writes report.json into the output directory.
inline nlohmann::json cmd_estimate(const RunConfig& rc) {
    const Dataset data = load_dataset(rc);
    const PipelineResult fit = run_two_step(data.X, data.y, data.delta, pipeline_config(rc), methods_from_names(rc.methods));
    const nlohmann::json report = report_to_json(data, fit, rc);
    detail::ensure_directory(rc.output_dir);
    detail::write_json(report, rc.output_dir / "report.json");
    return report;
}

/// Fitted omega-hat at every input row; writes weights.csv.
inline Vector cmd_weights(const RunConfig& rc) {
    const Dataset data = load_dataset(rc);
    const PipelineResult fit = run_two_step(data.X, data.y, data.delta, pipeline_config(rc), {Method::KrrPropensity});
    detail::ensure_directory(rc.output_dir);
    const auto path = rc.output_dir / "weights.csv";
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "row,delta,weight\n" << std::setprecision(17);
    for (Index i = 0; i < data.size(); ++i) {
        out << (i + 1) << ',' << (data.delta.responded(i) ? 1 : 0) << ',' << fit.weights(i) << '\n';
    }
    return fit.weights;
}

[[nodiscard]] inline ScenarioConfig scenario_config(const RunConfig& rc) {
    ScenarioConfig sc;
    sc.model = model_from_name(rc.model);
    sc.mechanism = mechanism_from_number(rc.mechanism);
    sc.n = rc.n;
    sc.replicates = rc.replicates;
    sc.base_seed = rc.seed;
    sc.estimators = methods_from_names(rc.methods);
    sc.pipeline = pipeline_config(rc);
    sc.threads = rc.threads;
    sc.validate();
    if (sc.replicates < 2) throw InputError("--B must be at least 2");
    return sc;
}

/// Monte Carlo study; writes summary.json and replicates.csv.
inline McSummary cmd_simulate(const RunConfig& rc) {
    const ScenarioConfig sc = scenario_config(rc);
    McSummary s = run_study(sc);
    detail::ensure_directory(rc.output_dir);
    write_summary_json(s, rc.output_dir / "summary.json");
    write_replicates_csv(s, rc.output_dir / "replicates.csv");
    return s;
}

}  // namespace krrmiss
