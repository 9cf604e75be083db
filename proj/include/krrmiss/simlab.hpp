#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <thread>
#include <vector>

#include "krrmiss/error.hpp"
#include "krrmiss/estimate.hpp"
#include "krrmiss/pipeline.hpp"
#include "krrmiss/random.hpp"
#include "krrmiss/ridge.hpp"

namespace krrmiss {

enum class OutcomeModel { A, B, C };
enum class ResponseMechanism { First, Second };

[[nodiscard]] inline std::string to_string(OutcomeModel m) {
    switch (m) {
        case OutcomeModel::A: return "A";
        case OutcomeModel::B: return "B";
        case OutcomeModel::C: return "C";
    }
    return "?";
}

[[nodiscard]] inline int mechanism_number(ResponseMechanism m) { return m == ResponseMechanism::First ? 1 : 2; }

/// Substream ids inside one replicate seed.
namespace stream {
inline constexpr std::uint64_t covariates = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t response = 3;
}  // namespace stream

inline constexpr Index kCovariateDimension = 4;

/// n x 4 matrix of i.i.d. Uniform(1,3) draws.
[[nodiscard]] inline Matrix generate_covariates(Index n, std::uint64_t seed) {
    if (n < 1) throw InputError("generate_covariates: n must be >= 1");
    CounterRng rng(seed, stream::covariates);
    Matrix X(n, kCovariateDimension);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < kCovariateDimension; ++j) X(i, j) = rng.uniform(1.0, 3.0);
    }
    return X;
}

/// Regression mean m(x) of each outcome model.
[[nodiscard]] inline double outcome_mean(OutcomeModel model, double x1, double x2, double x3, double x4) {
    switch (model) {
        case OutcomeModel::A: return 3.0 + 2.5 * x1 + 2.75 * x2 + 2.5 * x3 + 2.25 * x4;
        case OutcomeModel::B: return 3.0 + x1 * x1 * x2 * x2 * x2 * x3 / 35.0 + 0.1 * x4;
        case OutcomeModel::C: return 3.0 + x1 * x1 * x2 * x2 * x2 * x3 * x4 * x4 / 180.0;
    }
    return 0.0;
}

inline constexpr double kNoiseScale = 1.7320508075688772;  // sqrt(3)

/// y_i = m(x_i) + sqrt(3) eps_i with eps_i ~ N(0,1).
[[nodiscard]] inline Vector generate_outcome(const Matrix& X, OutcomeModel model, std::uint64_t seed) {
    if (X.cols() != kCovariateDimension) throw InputError("generate_outcome: X must have 4 columns");
    CounterRng rng(seed, stream::noise);
    Vector y(X.rows());
    for (Index i = 0; i < X.rows(); ++i) {
        y(i) = outcome_mean(model, X(i, 0), X(i, 1), X(i, 2), X(i, 3)) + kNoiseScale * rng.normal();
    }
    return y;
}

/// Linear response score; the response probability is its inverse logit.
[[nodiscard]] inline double response_score(ResponseMechanism mech, double x1, double x2, double x3, double x4) {
    if (mech == ResponseMechanism::First) return -1.1 * x1 + 0.5 * x2 - 0.25 * x3 - 0.1 * x4 + 2.5;
    return -0.3 + 0.7 * x1 * x1 - 0.5 * x2 - 0.25 * x3 - 0.25 * x4;
}

[[nodiscard]] inline double expit(double score) { return 1.0 / (1.0 + std::exp(-score)); }

/// delta_i ~ Bernoulli(expit(score_i + score_shift)).
[[nodiscard]] inline ResponsePattern generate_response(const Matrix& X, ResponseMechanism mech, std::uint64_t seed,
                                                       double score_shift = 0.0) {
    if (X.cols() != kCovariateDimension) throw InputError("generate_response: X must have 4 columns");
    CounterRng rng(seed, stream::response);
    std::vector<int> delta(static_cast<std::size_t>(X.rows()));
    for (Index i = 0; i < X.rows(); ++i) {
        const double p = expit(response_score(mech, X(i, 0), X(i, 1), X(i, 2), X(i, 3)) + score_shift);
        delta[static_cast<std::size_t>(i)] = rng.uniform() < p ? 1 : 0;
    }
    return ResponsePattern(delta);
}

/// E(Y) from the Uniform(1,3) moments E X = 2, E X^2 = 13/3, E X^3 = 10.
[[nodiscard]] inline double true_theta(OutcomeModel model) {
    constexpr double m1 = 2.0;
    constexpr double m2 = 13.0 / 3.0;
    constexpr double m3 = 10.0;
    switch (model) {
        case OutcomeModel::A: return 3.0 + (2.5 + 2.75 + 2.5 + 2.25) * m1;
        case OutcomeModel::B: return 3.0 + m2 * m3 * m1 / 35.0 + 0.1 * m1;
        case OutcomeModel::C: return 3.0 + m2 * m3 * m1 * m2 / 180.0;
    }
    return 0.0;
}

struct ScenarioConfig {
    OutcomeModel model = OutcomeModel::A;
    ResponseMechanism mechanism = ResponseMechanism::First;
    Index n = 500;
    Index replicates = 200;
    std::uint64_t base_seed = 1;
    std::vector<Method> estimators = {Method::KrrImputation, Method::KrrPropensity};
    PipelineConfig pipeline;
    double score_shift = 0.0;   ///< added to every response score
    unsigned threads = 1;

    void validate() const {
        if (n < 50) throw InputError("scenario: n must be >= 50");
        if (replicates < 1) throw InputError("scenario: B must be >= 1");
        if (estimators.empty()) throw InputError("scenario: no estimators requested");
        if (threads < 1) throw InputError("scenario: threads must be >= 1");
    }
};

struct ReplicateEstimate {
    Method method = Method::KrrImputation;
    double theta_hat = 0.0;
    double v_hat = 0.0;
    bool covered_90 = false;
    bool covered_95 = false;
};

struct ReplicateResult {
    Index index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    Index n1 = 0;
    double lambda = 0.0;
    double tau = 0.0;
    std::vector<ReplicateEstimate> estimates;

    [[nodiscard]] const ReplicateEstimate& get(Method m) const {
        for (const auto& e : estimates) {
            if (e.method == m) return e;
        }
        throw InputError("replicate: method " + to_string(m) + " not computed");
    }
};

[[nodiscard]] inline std::uint64_t replicate_seed(const ScenarioConfig& config, Index index) {
    return config.base_seed + static_cast<std::uint64_t>(index);
}

/// One simulated dataset through the two-step procedure. Fit errors are
/// recorded on the result rather than thrown.
[[nodiscard]] inline ReplicateResult run_replicate(const ScenarioConfig& config, Index index) {
    config.validate();
    ReplicateResult out;
    out.index = index;
    out.seed = replicate_seed(config, index);
    const double truth = true_theta(config.model);
    try {
        const Matrix X = generate_covariates(config.n, out.seed);
        const Vector y = generate_outcome(X, config.model, out.seed);
        const ResponsePattern delta = generate_response(X, config.mechanism, out.seed, config.score_shift);
        out.n1 = delta.n1();
        const PipelineResult fit = run_two_step(X, y, delta, config.pipeline, config.estimators);
        if (fit.regression) out.lambda = fit.regression->lambda;
        if (fit.balance) out.tau = fit.balance->tau;
        const double z90 = normal_quantile(0.95);
        const double z95 = normal_quantile(0.975);
        for (const auto& e : fit.estimates) {
            const double half = std::sqrt(e.variance);
            const double miss = std::abs(e.theta_hat - truth);
            out.estimates.push_back({e.method, e.theta_hat, e.variance, miss <= z90 * half, miss <= z95 * half});
        }
    } catch (const InputError& e) {
        out.failed = true;
        out.error = e.what();
    } catch (const NumericalError& e) {
        out.failed = true;
        out.error = e.what();
    }
    return out;
}

struct EstimatorSummary {
    Method method = Method::KrrImputation;
    double mean_estimate = 0.0;
    double mc_variance = 0.0;
    double mean_v_hat = 0.0;
    double relative_bias = 0.0;   ///< percent
    double coverage_90 = 0.0;     ///< percent
    double coverage_95 = 0.0;     ///< percent
    std::vector<double> estimates;
    std::vector<double> v_hats;
};

struct McSummary {
    OutcomeModel model = OutcomeModel::A;
    ResponseMechanism mechanism = ResponseMechanism::First;
    Index n = 0;
    Index requested = 0;
    Index completed = 0;
    Index failures = 0;
    std::uint64_t base_seed = 0;
    double truth = 0.0;
    std::vector<EstimatorSummary> estimators;
    std::vector<ReplicateResult> replicates;   ///< index-sorted, failures included

    [[nodiscard]] const EstimatorSummary& get(Method m) const {
        for (const auto& e : estimators) {
            if (e.method == m) return e;
        }
        throw InputError("summary: method " + to_string(m) + " not in study");
    }
};

/// 100 (mean V-hat - MC variance) / MC variance.
[[nodiscard]] inline double relative_bias_percent(double mean_v_hat, double mc_variance) {
    return 100.0 * (mean_v_hat - mc_variance) / mc_variance;
}

/// Unbiased sample variance.
[[nodiscard]] inline double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

/// Aggregates replicates (in index order) into per-estimator summaries.
[[nodiscard]] inline McSummary summarize(const ScenarioConfig& config, std::vector<ReplicateResult> replicates) {
    std::sort(replicates.begin(), replicates.end(),
              [](const ReplicateResult& a, const ReplicateResult& b) { return a.index < b.index; });
    McSummary s;
    s.model = config.model;
    s.mechanism = config.mechanism;
    s.n = config.n;
    s.requested = static_cast<Index>(replicates.size());
    s.base_seed = config.base_seed;
    s.truth = true_theta(config.model);
    for (Method m : config.estimators) {
        EstimatorSummary e;
        e.method = m;
        double cov90 = 0.0;
        double cov95 = 0.0;
        for (const auto& r : replicates) {
            if (r.failed) continue;
            const auto& est = r.get(m);
            e.estimates.push_back(est.theta_hat);
            e.v_hats.push_back(est.v_hat);
            cov90 += est.covered_90 ? 1.0 : 0.0;
            cov95 += est.covered_95 ? 1.0 : 0.0;
        }
        const double count = static_cast<double>(e.estimates.size());
        if (count > 0) {
            for (double v : e.estimates) e.mean_estimate += v;
            for (double v : e.v_hats) e.mean_v_hat += v;
            e.mean_estimate /= count;
            e.mean_v_hat /= count;
            e.mc_variance = sample_variance(e.estimates);
            e.relative_bias = relative_bias_percent(e.mean_v_hat, e.mc_variance);
            e.coverage_90 = 100.0 * cov90 / count;
            e.coverage_95 = 100.0 * cov95 / count;
        }
        s.estimators.push_back(std::move(e));
    }
    for (const auto& r : replicates) {
        if (r.failed) {
            ++s.failures;
        } else {
            ++s.completed;
        }
    }
    s.replicates = std::move(replicates);
    return s;
}

/// Runs B replicates (optionally on several threads) and summarizes them.
/// More than 5% failed replicates is an error.
[[nodiscard]] inline McSummary run_study(const ScenarioConfig& config) {
    config.validate();
    if (config.replicates < 2) throw InputError("run_study: B must be >= 2 to estimate coverage");
    std::vector<ReplicateResult> results(static_cast<std::size_t>(config.replicates));
    std::atomic<Index> next{0};
    const auto worker = [&] {
        for (Index i = next++; i < config.replicates; i = next++) results[static_cast<std::size_t>(i)] = run_replicate(config, i);
    };
    const unsigned threads = std::min<unsigned>(config.threads, static_cast<unsigned>(config.replicates));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    McSummary s = summarize(config, std::move(results));
    if (static_cast<double>(s.failures) > 0.05 * static_cast<double>(s.requested)) {
        std::string first;
        for (const auto& r : s.replicates) {
            if (r.failed) {
                first = r.error;
                break;
            }
        }
        throw NumericalError("run_study: " + std::to_string(s.failures) + " of " + std::to_string(s.requested) +
                             " replicates failed (first: " + first + ")");
    }
    return s;
}

/// Empirical coverage (percent) of theta +/- z sqrt(variance) over estimates.
[[nodiscard]] inline double interval_coverage(const std::vector<double>& estimates, double truth, double variance,
                                              double level) {
    if (estimates.empty()) throw InputError("interval_coverage: no estimates");
    const double half = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(variance);
    double hits = 0.0;
    for (double v : estimates) hits += std::abs(v - truth) <= half ? 1.0 : 0.0;
    return 100.0 * hits / static_cast<double>(estimates.size());
}

[[nodiscard]] inline nlohmann::json summary_to_json(const McSummary& s) {
    nlohmann::json j;
    j["model"] = to_string(s.model);
    j["mechanism"] = mechanism_number(s.mechanism);
    j["n"] = s.n;
    j["B"] = s.requested;
    j["completed"] = s.completed;
    j["failures"] = s.failures;
    j["base_seed"] = s.base_seed;
    j["true_theta"] = s.truth;
    nlohmann::json ests = nlohmann::json::array();
    for (const auto& e : s.estimators) {
        ests.push_back({{"estimator", to_string(e.method)},
                        {"mean_estimate", e.mean_estimate},
                        {"mc_variance", e.mc_variance},
                        {"mean_v_hat", e.mean_v_hat},
                        {"relative_bias_percent", e.relative_bias},
                        {"coverage_90", e.coverage_90},
                        {"coverage_95", e.coverage_95},
                        {"estimates", e.estimates}});
    }
    j["estimators"] = ests;
    return j;
}

inline void write_summary_json(const McSummary& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << summary_to_json(s).dump(2) << '\n';
}

/// One row per replicate per estimator.
inline void write_replicates_csv(const McSummary& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "index,estimator,theta_hat,v_hat,covered_90,covered_95\n";
    out << std::setprecision(17);
    for (const auto& r : s.replicates) {
        if (r.failed) continue;
        for (const auto& e : r.estimates) {
            out << r.index << ',' << to_string(e.method) << ',' << e.theta_hat << ',' << e.v_hat << ','
                << (e.covered_90 ? 1 : 0) << ',' << (e.covered_95 ? 1 : 0) << '\n';
        }
    }
}

}  // namespace krrmiss
