#include "support.hpp"
#include "tdcast/gbt/booster.hpp"
#include "tdcast/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tdcast;
using namespace tdcast::gbt;

namespace {

LagMatrix constant_feature_rows(const std::vector<double>& y) {
    LagMatrix m;
    m.n_lags = 1;
    for (std::size_t i = 0; i < y.size(); ++i) {
        m.features.push_back(1.0);
        m.targets.push_back(y[i]);
        m.series_index.push_back(0);
        m.target_time.push_back(static_cast<std::uint32_t>(i));
    }
    m.series_ids = {"s"};
    return m;
}

std::vector<double> nb_sample(double r, double p, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> y(n);
    for (auto& v : y) v = static_cast<double>(synth::negbin_draw(r, p, rng));
    return y;
}

GbtParams quick_params() {
    GbtParams p;
    p.num_trees = 20;
    p.max_leaves = 4;
    return p;
}

}  // namespace

TEST(MomentDispersion, OverAndUnderDispersed) {
    const std::vector<double> over = {0, 0, 0, 10, 0, 2};  // mean 2, sample variance 16
    EXPECT_NEAR(moment_dispersion(over), 4.0 / (16.0 - 2.0), 1e-12);
    const std::vector<double> under = {2, 2, 3, 2, 2};
    EXPECT_EQ(moment_dispersion(under), 1e6);
    // mean 0.1, sample variance 10: 0.01 / 9.9 falls below the lower clip
    std::vector<double> sparse(1000, 0.0);
    sparse.back() = 100.0;
    EXPECT_EQ(moment_dispersion(sparse), 0.01);
}

TEST(MinimizeDispersion, MatchesFineGridScan) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto y = nb_sample(3.0, 0.4, 2000, seed);
        const std::vector<double> f(y.size(), std::log(4.5));
        const double r = minimize_dispersion(y, f);
        double best_r = 0, best = 1e300;
        for (double lr = std::log(0.5); lr <= std::log(50.0); lr += 1e-4) {
            const double v = nb_nll(y, f, std::exp(lr));
            if (v < best) {
                best = v;
                best_r = std::exp(lr);
            }
        }
        EXPECT_NEAR(std::log(r), std::log(best_r), 2e-4);
        EXPECT_LE(nb_nll(y, f, r), best + 1e-9 * std::abs(best));
    }
}

TEST(MinimizeDispersion, UnderDispersedHitsUpperBound) {
    std::vector<double> y(500);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 3 + 1);  // variance < mean
    const std::vector<double> f(y.size(), std::log(2.0));
    EXPECT_GT(minimize_dispersion(y, f), 1e5);
}

TEST(NegBinFitTest, RecoversDispersion) {
    const auto y = nb_sample(3.0, 0.4, 10000, 42);
    const auto fit = fit_gbt_negbin(constant_feature_rows(y), quick_params(), 7);
    EXPECT_GE(fit.r, 2.4);
    EXPECT_LE(fit.r, 3.6);
    EXPECT_TRUE(fit.converged);
    EXPECT_FALSE(fit.warning);
    EXPECT_EQ(fit.model.r_hat(), fit.r);
    EXPECT_GE(fit.r_path.size(), 2u);
}

TEST(NegBinFitTest, UnderDispersedBehavesLikePoisson) {
    std::mt19937_64 rng(5);
    LagMatrix m;
    m.n_lags = 2;
    for (int i = 0; i < 3000; ++i) {
        const double a = fixture::uniform(rng, 0, 3), b = fixture::uniform(rng, 0, 3);
        const int trials = 4 + static_cast<int>(2 * a);
        m.features.insert(m.features.end(), {a, b});
        m.targets.push_back(static_cast<double>(std::binomial_distribution<int>(trials, 0.5)(rng)));
        m.series_index.push_back(0);
        m.target_time.push_back(static_cast<std::uint32_t>(i));
    }
    m.series_ids = {"s"};
    const auto fit = fit_gbt_negbin(m, quick_params(), 3);
    EXPECT_GE(fit.r, 1e5);
    const auto poisson = fit_gbt(m, LossSpec::poisson(), quick_params(), 3);
    double rel = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double a = fit.model.predict(m.row(r)), b = poisson.predict(m.row(r));
        rel += std::abs(a - b) / b;
    }
    EXPECT_LT(rel / static_cast<double>(m.rows()), 0.05);
}

TEST(NegBinFitTest, SingleOuterRoundEqualsFixedDispersionFit) {
    const auto y = nb_sample(2.0, 0.3, 1500, 9);
    const auto m = constant_feature_rows(y);
    NegBinOptions opts;
    opts.max_outer = 1;
    const auto fit = fit_gbt_negbin(m, quick_params(), 4, opts);
    const double r0 = moment_dispersion(y);
    EXPECT_EQ(fit.r_path.front(), r0);
    const auto fixed = fit_gbt(m, LossSpec::negbin(r0), quick_params(), 4);
    for (std::size_t r = 0; r < m.rows(); r += 50) EXPECT_EQ(fit.model.predict_raw(m.row(r)), fixed.predict_raw(m.row(r)));
    EXPECT_FALSE(fit.warning);
}

TEST(NegBinFitTest, ExplicitStartingDispersion) {
    const auto y = nb_sample(3.0, 0.4, 4000, 11);
    NegBinOptions opts;
    opts.r_init = 50.0;
    const auto fit = fit_gbt_negbin(constant_feature_rows(y), quick_params(), 1, opts);
    EXPECT_EQ(fit.r_path.front(), 50.0);
    EXPECT_NEAR(fit.r, 3.0, 0.6);
}
