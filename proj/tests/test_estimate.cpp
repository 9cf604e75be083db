#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "krrmiss/estimate.hpp"
#include "krrmiss/pipeline.hpp"
#include "krrmiss/simlab.hpp"
#include "oracles.hpp"

using namespace krrmiss;

namespace {

const double kNaN = std::nan("");

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

}  // namespace

TEST(Impute, Definitions) {
    EXPECT_DOUBLE_EQ(impute_estimate(vec({1, 2, 6}), ResponsePattern({1, 1, 1}), vec({9, 9, 9})), 3.0);
    EXPECT_DOUBLE_EQ(impute_estimate(vec({kNaN, kNaN}), ResponsePattern({0, 0}), vec({1.5, 2.5})), 2.0);
    EXPECT_DOUBLE_EQ(impute_estimate(vec({2, kNaN, 4}), ResponsePattern({1, 0, 1}), vec({0, 3, 0})), 3.0);
    EXPECT_THROW((void)impute_estimate(Vector(0), ResponsePattern(std::vector<int>{}), Vector(0)), InputError);
    EXPECT_THROW((void)impute_estimate(vec({kNaN, 1}), ResponsePattern({1, 1}), vec({0, 0})), InputError);
}

TEST(Propensity, Definitions) {
    EXPECT_DOUBLE_EQ(ps_estimate(vec({1, 2, 6}), ResponsePattern({1, 1, 1}), Vector::Ones(3)), 3.0);
    EXPECT_DOUBLE_EQ(ps_estimate(vec({5, kNaN}), ResponsePattern({1, 0}), vec({2, kNaN})), 5.0);
    // n^-1 sum delta w = 1 with y = c.
    EXPECT_DOUBLE_EQ(ps_estimate(vec({7, 7, kNaN, 7}), ResponsePattern({1, 1, 0, 1}), vec({1.5, 1.0, 3.0, 1.5})), 7.0);
    EXPECT_THROW((void)ps_estimate(Vector(0), ResponsePattern(std::vector<int>{}), Vector(0)), InputError);
}

TEST(Influence, Definitions) {
    const Vector y = vec({1, kNaN, 4, 2});
    const ResponsePattern d({1, 0, 1, 1});
    const Vector m = vec({0.5, 3.0, 3.5, 2.5});
    const Vector w = vec({2.0, kNaN, 1.5, 1.2});
    const Vector eta = influence_values(y, d, m, w);
    EXPECT_DOUBLE_EQ(eta(1), 3.0);
    EXPECT_DOUBLE_EQ(eta(0), 0.5 + 2.0 * 0.5);
    EXPECT_DOUBLE_EQ(eta(2), 3.5 + 1.5 * 0.5);
    EXPECT_DOUBLE_EQ(eta(3), 2.5 + 1.2 * (-0.5));

    const Vector exact = vec({0.5, kNaN, 3.5, 2.5});
    EXPECT_EQ(influence_values(exact, d, m, w), m);

    const Vector unit = influence_values(y, d, m, Vector::Ones(4));
    EXPECT_DOUBLE_EQ(unit(0), 1.0);
    EXPECT_DOUBLE_EQ(unit(1), 3.0);
    EXPECT_DOUBLE_EQ(unit.mean(), impute_estimate(y, d, m));

    EXPECT_THROW((void)influence_values(y, d, m, vec({kNaN, 1, 1, 1})), InputError);
}

TEST(Variance, Definitions) {
    EXPECT_EQ(variance_estimate(Vector::Constant(5, 2.5)), 0.0);
    EXPECT_DOUBLE_EQ(variance_estimate(vec({0, 2})), 1.0);
    EXPECT_THROW((void)variance_estimate(vec({1})), InputError);
}

TEST(Variance, ScalesAsOneOverN) {
    std::mt19937_64 rng(61);
    const Index n = 10000;
    const Vector eta = oracle::normal_vector(rng, n);
    EXPECT_LT(std::abs(variance_estimate(eta) * static_cast<double>(n) - 1.0), 0.05);
}

TEST(Variance, PermutationInvariant) {
    std::mt19937_64 rng(62);
    Vector eta = oracle::normal_vector(rng, 50);
    const double v = variance_estimate(eta);
    std::shuffle(eta.data(), eta.data() + eta.size(), rng);
    EXPECT_NEAR(variance_estimate(eta), v, 1e-15 * v);
}

TEST(Interval, NormalQuantiles) {
    const auto zero = confidence_interval(1.5, 0.0, 0.95);
    EXPECT_EQ(zero.lower, 1.5);
    EXPECT_EQ(zero.upper, 1.5);
    const auto a = confidence_interval(0.0, 1.0, 0.95);
    EXPECT_NEAR(a.upper, 1.959964, 1e-6);
    EXPECT_NEAR(a.lower, -1.959964, 1e-6);
    const auto b = confidence_interval(3.0, 4.0, 0.90);
    EXPECT_NEAR(b.upper - 3.0, 2.0 * 1.644854, 1e-6);
    EXPECT_TRUE(b.contains(3.0));
    EXPECT_THROW((void)confidence_interval(0.0, 1.0, 1.0), InputError);
    EXPECT_THROW((void)confidence_interval(0.0, 1.0, 0.0), InputError);
    EXPECT_THROW((void)confidence_interval(0.0, -1.0, 0.9), InputError);
}

TEST(Report, Invariants) {
    std::mt19937_64 rng(63);
    const Vector eta = oracle::normal_vector(rng, 40);
    const auto r = make_report(Method::KrrImputation, eta.mean(), eta, 0.9);
    EXPECT_GE(r.variance, 0.0);
    EXPECT_DOUBLE_EQ(r.std_error, std::sqrt(r.variance));
    EXPECT_TRUE(r.ci.contains(r.theta_hat));
    EXPECT_EQ(to_string(Method::KrrPropensity), "KRR_PS");
    EXPECT_EQ(method_from_string("linear-im"), Method::LinearImputation);
    EXPECT_THROW((void)method_from_string("BSPLINE"), InputError);
}

TEST(LinearBaseline, ReproducesExactLine) {
    std::mt19937_64 rng(64);
    const Matrix X = oracle::uniform_points(rng, 30, 3);
    const Vector y = (1.0 + 2.0 * X.col(0).array() - 0.5 * X.col(1).array() + 3.0 * X.col(2).array()).matrix();
    const ResponsePattern d(oracle::random_pattern(rng, 30, 0.6, 6));
    const Vector m = linear_imputation_baseline(X, y, d);
    EXPECT_LT((m - y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LinearBaseline, SlopeRecovered) {
    Matrix X(5, 1);
    X << 1, 2, 3, 4, 5;
    const Vector y = 2.0 * X.col(0);
    const Vector m = linear_imputation_baseline(X, y, ResponsePattern({1, 1, 0, 1, 1}));
    EXPECT_NEAR(m(2), 6.0, 1e-8);
    EXPECT_NEAR(m(4) - m(3), 2.0, 1e-8);
}

TEST(LinearBaseline, Errors) {
    Matrix X(6, 2);
    X << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
    const Vector y = X.col(0);
    EXPECT_THROW((void)linear_imputation_baseline(X, y, ResponsePattern::all_respond(6)), NumericalError);
    EXPECT_THROW((void)linear_imputation_baseline(X, y, ResponsePattern({1, 1, 1, 0, 0, 0})), InputError);
}

TEST(LinearBaseline, UnbiasedOnLinearModel) {
    double total = 0.0;
    const int B = 200;
    for (int b = 0; b < B; ++b) {
        const auto seed = static_cast<std::uint64_t>(3000 + b);
        const Matrix X = generate_covariates(500, seed);
        const Vector y = generate_outcome(X, OutcomeModel::A, seed);
        const ResponsePattern d = generate_response(X, ResponseMechanism::First, seed);
        total += impute_estimate(y, d, linear_imputation_baseline(X, y, d));
    }
    EXPECT_LT(std::abs(total / B - 23.0) / 23.0, 0.01);
}

TEST(Pipeline, FullResponseCollapse) {
    const auto seed = 71U;
    const Matrix X = generate_covariates(80, seed);
    const Vector y = generate_outcome(X, OutcomeModel::B, seed);
    const auto fit = run_two_step(X, y, ResponsePattern::all_respond(80), PipelineConfig{},
                                  {Method::KrrImputation, Method::KrrPropensity});
    EXPECT_EQ(fit.estimate(Method::KrrImputation).theta_hat, impute_estimate(y, ResponsePattern::all_respond(80), y));
    EXPECT_NEAR(fit.estimate(Method::KrrImputation).theta_hat, y.mean(), 1e-13);
    EXPECT_NEAR(fit.estimate(Method::KrrPropensity).theta_hat, y.mean(), 1e-13);
    EXPECT_FALSE(fit.balance.has_value());
    EXPECT_EQ(fit.weights, Vector::Ones(80));
}

TEST(Pipeline, LocationEquivariance) {
    const auto seed = 72U;
    const Matrix X = generate_covariates(150, seed);
    const Vector y = generate_outcome(X, OutcomeModel::C, seed);
    const ResponsePattern d = generate_response(X, ResponseMechanism::Second, seed);
    PipelineConfig config;
    config.lambda = 1.0;
    config.tau = 1.0 / static_cast<double>(d.n1());
    const std::vector<Method> methods = {Method::KrrImputation, Method::KrrPropensity};
    const auto base = run_two_step(X, y, d, config, methods);
    const double c = 5.0;
    const auto shifted = run_two_step(X, (y.array() + c).matrix(), d, config, methods);
    for (Method m : methods) {
        EXPECT_NEAR(shifted.estimate(m).theta_hat - base.estimate(m).theta_hat, c, 1e-6) << to_string(m);
    }
}

TEST(Pipeline, MethodsAndDiagnostics) {
    const auto seed = 73U;
    const Matrix X = generate_covariates(120, seed);
    const Vector y = generate_outcome(X, OutcomeModel::A, seed);
    const ResponsePattern d = generate_response(X, ResponseMechanism::First, seed);
    const auto fit = run_two_step(X, y, d, PipelineConfig{},
                                  {Method::KrrImputation, Method::KrrPropensity, Method::LinearImputation,
                                   Method::CompleteCase});
    ASSERT_EQ(fit.estimates.size(), 4U);
    ASSERT_TRUE(fit.regression && fit.balance);
    EXPECT_EQ(fit.regression->gcv_path.size(), 40U);
    EXPECT_FALSE(fit.balance->d_path.empty());
    EXPECT_GE(fit.weights.minCoeff(), 1.0);
    double observed = 0.0;
    for (Index i : d.respondents()) observed += y(i);
    EXPECT_NEAR(fit.estimate(Method::CompleteCase).theta_hat, observed / static_cast<double>(d.n1()), 1e-12);
    for (const auto& e : fit.estimates) {
        EXPECT_TRUE(std::isfinite(e.theta_hat));
        EXPECT_TRUE(e.ci.contains(e.theta_hat));
    }
    EXPECT_THROW((void)run_two_step(X, y, ResponsePattern(std::vector<int>(120, 0)), PipelineConfig{},
                                    {Method::KrrImputation}),
                 InputError);
}
