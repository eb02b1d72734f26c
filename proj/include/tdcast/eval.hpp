#pragma once

#include "tdcast/features.hpp"
#include "tdcast/gbt/booster.hpp"
#include "tdcast/series.hpp"
#include "tdcast/topdown.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tdcast {

/// Pinball loss of quantile forecast q at level u for outcome y.
double pinball(double y, double q, double u);

/**
 * Mean absolute one-step naive error over [first sale, train_end]:
 * (1/(n-1)) * sum |y_t - y_{t-1}| with n observations in that span.
 * nullopt when the span has fewer than two observations or the sum is zero.
 */
std::optional<double> spl_scale(const SalesSeries& history, std::size_t train_end);

/// Scaled pinball loss of one quantile path; nullopt when the scale is undefined (series omitted).
std::optional<double> spl(std::span<const double> truth, std::span<const double> q, const SalesSeries& history,
                          std::size_t train_end, double u);

struct SeriesSpl {
    std::string series_id;
    std::vector<double> spl;  // per level; empty when invalid
    bool valid = false;

    [[nodiscard]] double mean_spl() const;
};

SeriesSpl evaluate_series(std::span<const double> truth, const QuantileForecastSet& forecast,
                          const SalesSeries& history, std::size_t train_end);

struct SplReport {
    std::vector<SeriesSpl> series;
    double wspl = 0.0;
    std::size_t n_valid = 0;
    std::size_t n_omitted = 0;
};

/// Equal-weight average of per-series mean SPL over valid series. Throws if none is valid.
double wspl(std::span<const SeriesSpl> series);

SplReport make_report(std::vector<SeriesSpl> series);

/// Mean over series of the horizon-mean squared error.
double mse(std::span<const std::vector<double>> truth, std::span<const std::vector<double>> forecasts);

enum class BaselineKind { Mean, Naive, SNaive, Drift };

std::string to_string(BaselineKind kind);
BaselineKind parse_baseline(std::string_view name);

/// Point forecast plus Gaussian prediction-interval quantiles (floored at 0, rounded).
std::pair<ForecastPath, QuantileForecastSet> baseline_forecast(BaselineKind kind, const SalesSeries& history,
                                                               std::size_t train_end, int horizon,
                                                               std::span<const double> levels, int season = 7);

/**
 * Direct multi-horizon quantile benchmark: one pinball-loss GBT per
 * (level, step) pair, step k trained on targets k-1 days past each lag window.
 */
class DirectQuantileModels {
public:
    [[nodiscard]] std::size_t model_count() const noexcept { return models_.size(); }
    [[nodiscard]] const std::vector<double>& levels() const noexcept { return levels_; }
    [[nodiscard]] int horizon() const noexcept { return horizon_; }
    [[nodiscard]] const gbt::GbtModel& model(std::size_t level, int step) const;

    /// Quantiles from the window ending at train_end, sorted across levels at each step.
    [[nodiscard]] QuantileForecastSet predict(const SalesSeries& series, std::size_t train_end) const;

private:
    friend DirectQuantileModels fit_direct_quantile_gbt(std::span<const SalesSeries>, std::size_t, int,
                                                        std::span<const double>, int, const gbt::GbtParams&,
                                                        std::uint64_t, PadPolicy);
    std::vector<double> levels_;
    int horizon_ = 0;
    std::size_t n_lags_ = 0;
    std::vector<gbt::GbtModel> models_;  // [step * n_levels + level]
};

DirectQuantileModels fit_direct_quantile_gbt(std::span<const SalesSeries> series, std::size_t train_end, int n_lags,
                                             std::span<const double> levels, int horizon,
                                             const gbt::GbtParams& params, std::uint64_t seed,
                                             PadPolicy pad = PadPolicy::ZeroPad);

/// Sorts each step's quantiles ascending across levels.
void enforce_monotone(QuantileForecastSet& set);

}  // namespace tdcast
