#include "support.hpp"
#include "tdcast/errors.hpp"
#include "tdcast/gbt/booster.hpp"
#include "tdcast/gbt/loss.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace tdcast;
using namespace tdcast::gbt;

namespace {

LagMatrix make_matrix(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
    LagMatrix m;
    m.n_lags = x.empty() ? 0 : x[0].size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        m.features.insert(m.features.end(), x[i].begin(), x[i].end());
        m.targets.push_back(y[i]);
        m.series_index.push_back(0);
        m.target_time.push_back(static_cast<std::uint32_t>(i));
    }
    m.series_ids = {"s"};
    return m;
}

/// Counts that depend on two of five features through a log-linear rate.
LagMatrix poisson_rows(std::mt19937_64& rng, int n) {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < n; ++i) {
        std::vector<double> row(5);
        for (auto& v : row) v = fixture::uniform(rng, 0.0, 4.0);
        const double rate = std::exp(-0.5 + 0.4 * row[0] + 0.3 * (row[2] > 2.0));
        x.push_back(row);
        y.push_back(static_cast<double>(std::poisson_distribution<int>(rate)(rng)));
    }
    return make_matrix(x, y);
}

double poisson_deviance(const GbtModel& model, const LagMatrix& m) {
    double d = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double mu = model.predict(m.row(r));
        const double y = m.targets[r];
        d += 2.0 * ((y > 0 ? y * std::log(y / mu) : 0.0) - (y - mu));
    }
    return d / static_cast<double>(m.rows());
}

GbtParams small_params() {
    GbtParams p;
    p.num_trees = 30;
    p.max_leaves = 8;
    p.min_data_in_leaf = 10;
    return p;
}

}  // namespace

TEST(Loss, NegBinExample) {
    const auto gh = loss_grad_hess(LossSpec::negbin(1.0), 0.0, 0.0);
    EXPECT_DOUBLE_EQ(gh.g, 0.5);
    EXPECT_DOUBLE_EQ(gh.h, 0.25);
    EXPECT_NEAR(nb_nll_point(0.0, 0.0, 1.0), std::log(2.0), 1e-15);
}

TEST(Loss, PoissonStationaryAtTheMean) {
    for (double x : {0.5, 1.0, 3.0, 17.0}) {
        EXPECT_NEAR(loss_grad_hess(LossSpec::poisson(), x, std::log(x)).g, 0.0, 1e-12);
    }
}

TEST(Loss, NegBinMinimizedAtLogMean) {
    for (double x : {1.0, 4.0, 30.0}) {
        for (double r : {0.3, 2.0, 50.0}) {
            const double f = std::log(x);
            EXPECT_NEAR(loss_grad_hess(LossSpec::negbin(r), x, f).g, 0.0, 1e-12);
            EXPECT_LT(nb_nll_point(x, f, r), nb_nll_point(x, f + 0.1, r));
            EXPECT_LT(nb_nll_point(x, f, r), nb_nll_point(x, f - 0.1, r));
        }
    }
}

TEST(Loss, ClosedForms) {
    // Tweedie and L2 formulas by direct substitution
    const double x = 3.0, f = 0.7, rho = 1.3;
    const auto t = loss_grad_hess(LossSpec::tweedie(rho), x, f);
    EXPECT_NEAR(t.g, -x * std::exp((1 - rho) * f) + std::exp((2 - rho) * f), 1e-12);
    EXPECT_NEAR(t.h, -(1 - rho) * x * std::exp((1 - rho) * f) + (2 - rho) * std::exp((2 - rho) * f), 1e-12);
    const auto l2 = loss_grad_hess(LossSpec::l2(), x, f);
    EXPECT_DOUBLE_EQ(l2.g, f - x);
    EXPECT_DOUBLE_EQ(l2.h, 1.0);
    const auto q = loss_grad_hess(LossSpec::pinball(0.9), 5.0, 2.0);
    EXPECT_DOUBLE_EQ(q.g, -0.9);
    EXPECT_DOUBLE_EQ(q.h, kHessianFloor);
    EXPECT_DOUBLE_EQ(loss_grad_hess(LossSpec::pinball(0.9), 1.0, 2.0).g, 0.1);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(21);
    const std::vector<LossSpec> losses = {LossSpec::l2(),           LossSpec::l1(),         LossSpec::huber(1.5),
                                          LossSpec::poisson(),      LossSpec::tweedie(1.2), LossSpec::tweedie(1.8),
                                          LossSpec::pinball(0.25),  LossSpec::negbin(0.5),  LossSpec::negbin(20.0)};
    for (const auto& loss : losses) {
        for (int k = 0; k < 300; ++k) {
            const double x = std::floor(fixture::uniform(rng, 0.0, 30.0));
            const double f = loss.link() == Link::Log ? fixture::uniform(rng, -2.0, 3.0) : fixture::uniform(rng, -5.0, 35.0);
            // keep away from kinks of the piecewise losses
            if (loss.floored_hessian()) {
                const double d = std::abs(f - x);
                if (d < 1e-3 || std::abs(d - loss.huber_delta) < 1e-3) continue;
            }
            const double step = 1e-5;
            const double fd_g = (loss_value(loss, x, f + step) - loss_value(loss, x, f - step)) / (2 * step);
            const auto gh = loss_grad_hess(loss, x, f);
            EXPECT_LE(std::abs(gh.g - fd_g), 1e-6 * std::max(1.0, std::abs(gh.g))) << to_string(loss) << " x=" << x << " f=" << f;
            if (!loss.floored_hessian()) {
                const double fd_h = (loss_grad_hess(loss, x, f + step).g - loss_grad_hess(loss, x, f - step).g) / (2 * step);
                EXPECT_LE(std::abs(gh.h - fd_h), 1e-6 * std::max(1.0, std::abs(gh.h))) << to_string(loss);
                EXPECT_GT(gh.h, 0.0);
            }
        }
    }
}

TEST(Loss, RejectsBadInputs) {
    EXPECT_THROW(loss_grad_hess(LossSpec::negbin(1.0), 1.0, std::nan("")), NumericalError);
    EXPECT_THROW(LossSpec::negbin(0.0).validate(), ConfigError);
    EXPECT_THROW(LossSpec::negbin(-1.0).validate(), ConfigError);
    EXPECT_THROW(LossSpec::tweedie(2.0).validate(), ConfigError);
    EXPECT_THROW(LossSpec::pinball(1.0).validate(), ConfigError);
    EXPECT_THROW(parse_loss("hinge"), ConfigError);
}

TEST(Loss, ParseRoundTrip) {
    for (const auto* text : {"l2", "l1", "poisson", "huber:2", "tweedie:1.3", "pinball:0.9", "negbin:4"}) {
        const auto loss = parse_loss(text);
        EXPECT_EQ(parse_loss(to_string(loss)).kind, loss.kind);
    }
    EXPECT_EQ(parse_loss("tweedie").tweedie_power, 1.5);
    EXPECT_EQ(parse_loss("quantile:0.1").quantile, 0.1);
}

TEST(Loss, NllGridScanNearTrueDispersion) {
    std::mt19937_64 rng(22);
    const double r_true = 3.0, p = 0.4;
    std::vector<double> x(1000);
    for (auto& v : x) {
        const double rate = std::gamma_distribution<double>(r_true, (1 - p) / p)(rng);
        v = static_cast<double>(std::poisson_distribution<int>(rate)(rng));
    }
    const std::vector<double> f(x.size(), std::log(r_true * (1 - p) / p));
    double best_r = 0.0, best = 1e300;
    for (double r = 0.5; r <= 10.0; r += 0.01) {
        const double v = nb_nll(x, f, r);
        if (v < best) {
            best = v;
            best_r = r;
        }
    }
    EXPECT_GT(best_r, 2.0);
    EXPECT_LT(best_r, 4.5);
}

TEST(Binning, FewDistinctValuesUseMidpoints) {
    const auto m = make_matrix({{0}, {1}, {1}, {3}}, {0, 0, 0, 0});
    const auto b = bin_features(m);
    EXPECT_EQ(b.edges[0], (std::vector<double>{0.5, 2.0}));
    EXPECT_EQ(b.bins[0], (std::vector<std::uint8_t>{0, 1, 1, 2}));
}

TEST(Binning, ManyValuesCappedAtMaxBins) {
    std::mt19937_64 rng(23);
    std::vector<std::vector<double>> x;
    for (int i = 0; i < 5000; ++i) x.push_back({fixture::uniform(rng, 0, 1)});
    const auto b = bin_features(make_matrix(x, std::vector<double>(5000, 0.0)), 255);
    EXPECT_LE(b.n_bins(0), 255u);
    EXPECT_GE(b.n_bins(0), 200u);
    EXPECT_TRUE(std::is_sorted(b.edges[0].begin(), b.edges[0].end()));
    for (std::size_t i = 0; i < 5000; ++i) {
        const auto bin = b.bins[0][i];
        if (bin > 0) { EXPECT_GT(x[i][0], b.edges[0][bin - 1]); }
        if (bin < b.edges[0].size()) { EXPECT_LE(x[i][0], b.edges[0][bin]); }
    }
}

TEST(Gbt, SingleLeafPredictsTheMean) {
    std::mt19937_64 rng(24);
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 50; ++i) {
        x.push_back({fixture::uniform(rng, 0, 1)});
        y.push_back(fixture::uniform(rng, 0, 10));
    }
    GbtParams p;
    p.num_trees = 1;
    p.min_data_in_leaf = 26;  // no split can keep 26 rows on both sides
    const auto model = fit_gbt(make_matrix(x, y), LossSpec::l2(), p, 1);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 50.0;
    for (const auto& row : x) EXPECT_NEAR(model.predict(row), mean, 1e-12);
}

TEST(Gbt, BinarySplitGivesGroupMeans) {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
        x.push_back({static_cast<double>(i % 2)});
        y.push_back(i % 2 == 0 ? 1.0 + (i % 4) : 10.0 + (i % 3));
    }
    double mean0 = 0, mean1 = 0;
    for (int i = 0; i < 40; ++i) (i % 2 == 0 ? mean0 : mean1) += y[i] / 20.0;
    GbtParams p;
    p.num_trees = 1;
    p.max_leaves = 2;
    p.min_data_in_leaf = 1;
    p.learning_rate = 1.0;
    const auto model = fit_gbt(make_matrix(x, y), LossSpec::l2(), p, 1);
    EXPECT_NEAR(model.predict(std::vector<double>{0.0}), mean0, 1e-12);
    EXPECT_NEAR(model.predict(std::vector<double>{1.0}), mean1, 1e-12);
    EXPECT_EQ(model.trees()[0].num_leaves(), 2);
}

TEST(Gbt, PoissonBeatsConstantOnHeldOutRows) {
    std::mt19937_64 rng(25);
    const auto train = poisson_rows(rng, 3000);
    const auto test = poisson_rows(rng, 1000);
    GbtParams p = small_params();
    p.num_trees = 60;
    const auto model = fit_gbt(train, LossSpec::poisson(), p, 3);
    GbtParams none = p;
    none.num_trees = 0;
    const auto constant = fit_gbt(train, LossSpec::poisson(), none, 3);
    EXPECT_NEAR(constant.base_score(), std::log(std::accumulate(train.targets.begin(), train.targets.end(), 0.0) / 3000.0), 1e-12);
    EXPECT_LT(poisson_deviance(model, test), 0.95 * poisson_deviance(constant, test));
}

TEST(Gbt, TrainingLossIsMonotoneForEveryLoss) {
    std::mt19937_64 rng(26);
    const auto m = poisson_rows(rng, 1500);
    for (const auto& loss : {LossSpec::l2(), LossSpec::l1(), LossSpec::huber(1.0), LossSpec::poisson(),
                             LossSpec::tweedie(1.5), LossSpec::pinball(0.8), LossSpec::negbin(2.0)}) {
        for (const auto& params : {small_params(), GbtParams::preset_profile()}) {
            GbtParams p = params;
            p.num_trees = 25;
            const auto model = fit_gbt(m, loss, p, 5);
            const auto& path = model.train_loss();
            ASSERT_EQ(path.size(), static_cast<std::size_t>(p.num_trees) + 1) << to_string(loss);
            for (std::size_t k = 1; k < path.size(); ++k) {
                EXPECT_LE(path[k], path[k - 1] + 1e-12 * std::abs(path[k - 1])) << to_string(loss) << " tree " << k;
            }
            EXPECT_LT(path.back(), path.front()) << to_string(loss);
        }
    }
}

TEST(Gbt, DeterministicUnderSeedWithSubsampling) {
    std::mt19937_64 rng(27);
    const auto m = poisson_rows(rng, 800);
    auto p = GbtParams::preset_profile();
    p.num_trees = 20;
    p.min_data_in_leaf = 5;
    const auto a = fit_gbt(m, LossSpec::poisson(), p, 11);
    const auto b = fit_gbt(m, LossSpec::poisson(), p, 11);
    const auto c = fit_gbt(m, LossSpec::poisson(), p, 12);
    bool differs = false;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        EXPECT_EQ(a.predict_raw(m.row(r)), b.predict_raw(m.row(r)));
        differs = differs || a.predict_raw(m.row(r)) != c.predict_raw(m.row(r));
    }
    EXPECT_TRUE(differs);
}

TEST(Gbt, LogLinkPredictionsArePositive) {
    std::mt19937_64 rng(28);
    auto m = poisson_rows(rng, 600);
    for (std::size_t i = 0; i < m.rows(); i += 3) m.targets[i] = 0.0;
    for (const auto& loss : {LossSpec::poisson(), LossSpec::tweedie(1.5), LossSpec::negbin(1.0)}) {
        const auto model = fit_gbt(m, loss, small_params(), 2);
        for (std::size_t r = 0; r < m.rows(); ++r) EXPECT_GT(model.predict(m.row(r)), 0.0);
    }
}

TEST(Gbt, ConstantTargetGivesBaseScoreOnlyModel) {
    const auto m = make_matrix({{1}, {2}, {3}, {4}}, {2, 2, 2, 2});
    GbtParams p;
    p.min_data_in_leaf = 1;
    const auto model = fit_gbt(m, LossSpec::l2(), p, 1);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(model.predict(m.row(r)), 2.0, 1e-12);
    const auto zeros = make_matrix({{1}, {2}, {3}}, {0, 0, 0});
    EXPECT_NO_THROW(fit_gbt(zeros, LossSpec::poisson(), p, 1));
}

TEST(Gbt, PinballLeavesTrackQuantiles) {
    std::mt19937_64 rng(29);
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 4000; ++i) {
        const double g = static_cast<double>(i % 2);
        x.push_back({g});
        y.push_back(10.0 * g + fixture::uniform(rng, -1.0, 1.0));
    }
    GbtParams p;
    p.num_trees = 50;
    p.max_leaves = 2;
    const auto model = fit_gbt(make_matrix(x, y), LossSpec::pinball(0.9), p, 1);
    EXPECT_NEAR(model.predict(std::vector<double>{0.0}), 0.8, 0.1);
    EXPECT_NEAR(model.predict(std::vector<double>{1.0}), 10.8, 0.1);
}

TEST(Gbt, RejectsBadInput) {
    GbtParams p;
    EXPECT_ANY_THROW(fit_gbt(LagMatrix{}, LossSpec::l2(), p, 1));
    p.learning_rate = 0.0;
    EXPECT_THROW(p.validate(), ConfigError);
    EXPECT_THROW(GbtParams::profile("huge"), ConfigError);
    EXPECT_EQ(GbtParams::profile("preset").num_trees, 400);
}

TEST(GbtIo, RoundTripPreservesPredictions) {
    std::mt19937_64 rng(30);
    const auto m = poisson_rows(rng, 500);
    for (const auto& loss : {LossSpec::poisson(), LossSpec::pinball(0.3), LossSpec::negbin(2.5)}) {
        auto model = fit_gbt(m, loss, small_params(), 4);
        if (loss.kind == LossKind::NegBin) model.set_r_hat(2.5);
        std::stringstream io;
        write_gbt_model(io, model);
        const auto back = read_gbt_model(io);
        EXPECT_EQ(back.r_hat(), model.r_hat());
        EXPECT_EQ(back.loss().kind, loss.kind);
        for (std::size_t r = 0; r < m.rows(); ++r) EXPECT_EQ(back.predict_raw(m.row(r)), model.predict_raw(m.row(r)));
    }
    std::stringstream bad("not a model\n");
    EXPECT_ANY_THROW(read_gbt_model(bad));
}
