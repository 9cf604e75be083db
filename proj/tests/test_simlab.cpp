#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "krrmiss/simlab.hpp"

using namespace krrmiss;

namespace {

ScenarioConfig cheap_config(Index replicates) {
    ScenarioConfig c;
    c.n = 60;
    c.replicates = replicates;
    c.base_seed = 11;
    c.pipeline.lambda = 0.5;
    c.pipeline.tau = 0.02;
    return c;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("krrmiss_simlab_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Covariates, SupportMomentsAndDeterminism) {
    const Index n = 20000;
    const Matrix X = generate_covariates(n, 5);
    EXPECT_GT(X.minCoeff(), 1.0);
    EXPECT_LT(X.maxCoeff(), 3.0);
    const double bound = 3.0 * std::sqrt(1.0 / 3.0) / std::sqrt(static_cast<double>(n));
    for (Index j = 0; j < 4; ++j) EXPECT_LT(std::abs(X.col(j).mean() - 2.0), bound);
    EXPECT_EQ(generate_covariates(n, 5), X);
    EXPECT_NE(generate_covariates(n, 6), X);
    EXPECT_THROW((void)generate_covariates(0, 5), InputError);
}

TEST(Outcome, RegressionMeans) {
    EXPECT_DOUBLE_EQ(outcome_mean(OutcomeModel::A, 2, 2, 2, 2), 23.0);
    EXPECT_NEAR(outcome_mean(OutcomeModel::B, 1, 1, 1, 1), 3.128571, 1e-6);
    EXPECT_NEAR(outcome_mean(OutcomeModel::C, 1, 1, 1, 1), 3.0 + 1.0 / 180.0, 1e-15);
    const Matrix X = generate_covariates(50, 9);
    EXPECT_EQ(generate_outcome(X, OutcomeModel::B, 9), generate_outcome(X, OutcomeModel::B, 9));
    EXPECT_THROW((void)generate_outcome(Matrix::Ones(3, 2), OutcomeModel::A, 1), InputError);
}

TEST(TrueTheta, AnalyticValues) {
    EXPECT_DOUBLE_EQ(true_theta(OutcomeModel::A), 23.0);
    EXPECT_NEAR(true_theta(OutcomeModel::B), 5.676190, 1e-6);
    EXPECT_NEAR(true_theta(OutcomeModel::C), 5.086420, 1e-6);
}

TEST(TrueTheta, AgreesWithMonteCarloIntegration) {
    // Plain Monte Carlo over m(x) with an independent generator.
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(1.0, 3.0);
    const long draws = 10'000'000;
    double sum[3] = {0, 0, 0};
    double sq[3] = {0, 0, 0};
    const OutcomeModel models[3] = {OutcomeModel::A, OutcomeModel::B, OutcomeModel::C};
    for (long i = 0; i < draws; ++i) {
        const double x1 = u(rng), x2 = u(rng), x3 = u(rng), x4 = u(rng);
        for (int k = 0; k < 3; ++k) {
            const double m = outcome_mean(models[k], x1, x2, x3, x4);
            sum[k] += m;
            sq[k] += m * m;
        }
    }
    for (int k = 0; k < 3; ++k) {
        const double mean = sum[k] / draws;
        const double se = std::sqrt((sq[k] / draws - mean * mean) / draws);
        EXPECT_LT(std::abs(mean - true_theta(models[k])), 4.0 * se) << to_string(models[k]);
    }
}

TEST(Response, RatesNearSixtyPercent) {
    const Matrix X = generate_covariates(100000, 17);
    for (auto mech : {ResponseMechanism::First, ResponseMechanism::Second}) {
        const auto d = generate_response(X, mech, 17);
        const double rate = 100.0 * static_cast<double>(d.n1()) / static_cast<double>(d.n());
        EXPECT_NEAR(rate, 60.0, 3.0) << mechanism_number(mech);
        EXPECT_EQ(generate_response(X, mech, 17).respondents(), d.respondents());
    }
}

TEST(Response, LargeShiftForcesFullResponse) {
    const Matrix X = generate_covariates(500, 3);
    EXPECT_EQ(generate_response(X, ResponseMechanism::Second, 3, 100.0).n1(), 500);
}

TEST(Outcome, VarianceNearTen) {
    const Matrix X = generate_covariates(100000, 23);
    for (auto model : {OutcomeModel::A, OutcomeModel::B, OutcomeModel::C}) {
        const Vector y = generate_outcome(X, model, 23);
        const double var = (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
        EXPECT_NEAR(var, 10.0, 1.5) << to_string(model);
    }
}

TEST(Replicate, DeterministicAndSane) {
    ScenarioConfig c;
    c.replicates = 1;
    const auto a = run_replicate(c, 0);
    const auto b = run_replicate(c, 0);
    ASSERT_FALSE(a.failed) << a.error;
    EXPECT_EQ(a.seed, c.base_seed);
    for (Method m : c.estimators) {
        EXPECT_EQ(a.get(m).theta_hat, b.get(m).theta_hat);
        EXPECT_EQ(a.get(m).v_hat, b.get(m).v_hat);
    }
    EXPECT_LT(std::abs(a.get(Method::KrrImputation).theta_hat - 23.0), 1.5);
    EXPECT_GT(a.lambda, 0.0);
    EXPECT_GT(a.tau, 0.0);
}

TEST(Replicate, FullResponseCollapsesToSampleMean) {
    ScenarioConfig c = cheap_config(1);
    c.score_shift = 100.0;
    const auto r = run_replicate(c, 4);
    ASSERT_FALSE(r.failed) << r.error;
    const auto seed = replicate_seed(c, 4);
    const Vector y = generate_outcome(generate_covariates(c.n, seed), c.model, seed);
    EXPECT_NEAR(r.get(Method::KrrImputation).theta_hat, y.mean(), 1e-12);
    EXPECT_NEAR(r.get(Method::KrrPropensity).theta_hat, y.mean(), 1e-12);
}

TEST(Replicate, FitErrorsAreRecorded) {
    ScenarioConfig c = cheap_config(1);
    c.pipeline.lambda = -1.0;
    const auto r = run_replicate(c, 0);
    EXPECT_TRUE(r.failed);
    EXPECT_FALSE(r.error.empty());
}

TEST(Study, TwoReplicateSmoke) {
    const auto s = run_study(cheap_config(2));
    EXPECT_EQ(s.completed, 2);
    for (const auto& e : s.estimators) {
        EXPECT_TRUE(std::isfinite(e.mean_estimate));
        EXPECT_TRUE(std::isfinite(e.mc_variance));
        EXPECT_TRUE(std::isfinite(e.relative_bias));
        for (double cov : {e.coverage_90, e.coverage_95}) {
            EXPECT_TRUE(cov == 0.0 || cov == 50.0 || cov == 100.0) << cov;
        }
    }
}

TEST(Study, IdenticalAcrossThreadCounts) {
    ScenarioConfig c = cheap_config(6);
    const auto one = run_study(c);
    c.threads = 3;
    const auto three = run_study(c);
    const auto again = run_study(c);
    const auto dump = [](const McSummary& s) { return summary_to_json(s).dump(); };
    EXPECT_EQ(dump(one), dump(three));
    EXPECT_EQ(dump(three), dump(again));
}

TEST(Study, RelativeBiasMatchesDefinition) {
    const auto s = run_study(cheap_config(8));
    for (const auto& e : s.estimators) {
        long double mean = 0.0L, vmean = 0.0L;
        for (std::size_t i = 0; i < e.estimates.size(); ++i) {
            mean += e.estimates[i];
            vmean += e.v_hats[i];
        }
        const auto count = static_cast<long double>(e.estimates.size());
        mean /= count;
        vmean /= count;
        long double ss = 0.0L;
        for (double v : e.estimates) ss += (v - mean) * (v - mean);
        const long double mc = ss / (count - 1.0L);
        const long double rb = 100.0L * (vmean - mc) / mc;
        EXPECT_LT(std::abs(static_cast<double>((e.relative_bias - rb) / rb)), 1e-12);
        EXPECT_GE(e.coverage_90, 0.0);
        EXPECT_LE(e.coverage_95, 100.0);
        EXPECT_LE(e.coverage_90, e.coverage_95);
    }
}

TEST(Study, Errors) {
    ScenarioConfig c = cheap_config(4);
    c.pipeline.lambda = -1.0;
    EXPECT_THROW((void)run_study(c), NumericalError);
    EXPECT_THROW((void)run_study(cheap_config(1)), InputError);
    ScenarioConfig small = cheap_config(2);
    small.n = 49;
    EXPECT_THROW((void)run_study(small), InputError);
}

TEST(Study, OracleIntervalCoverageIsNominal) {
    ScenarioConfig c = cheap_config(2000);
    c.n = 50;
    c.estimators = {Method::LinearImputation};
    const auto s = run_study(c);
    const auto& e = s.get(Method::LinearImputation);
    EXPECT_NEAR(interval_coverage(e.estimates, s.truth, e.mc_variance, 0.90), 90.0, 2.0);
    EXPECT_NEAR(interval_coverage(e.estimates, s.truth, e.mc_variance, 0.95), 95.0, 2.0);
}

TEST(Study, OutputFiles) {
    const auto s = run_study(cheap_config(3));
    const auto dir = scratch("files");
    write_summary_json(s, dir / "summary.json");
    write_replicates_csv(s, dir / "replicates.csv");

    std::ifstream js(dir / "summary.json");
    const auto j = nlohmann::json::parse(js);
    EXPECT_EQ(j.at("B"), 3);
    EXPECT_EQ(j.at("model"), "A");
    ASSERT_EQ(j.at("estimators").size(), 2U);
    for (const auto& e : j.at("estimators")) {
        for (const char* key : {"estimator", "mean_estimate", "mc_variance", "mean_v_hat", "relative_bias_percent",
                                "coverage_90", "coverage_95", "estimates"}) {
            EXPECT_TRUE(e.contains(key)) << key;
        }
        EXPECT_EQ(e.at("estimates").size(), 3U);
    }

    std::ifstream csv(dir / "replicates.csv");
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "index,estimator,theta_hat,v_hat,covered_90,covered_95");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 6);
}
