#include "tdcast/eval.hpp"

#include "tdcast/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tdcast {

double pinball(double y, double q, double u) { return q <= y ? u * (y - q) : (1.0 - u) * (q - y); }

std::optional<double> spl_scale(const SalesSeries& history, std::size_t train_end) {
    if (!history.first_nonzero_index || *history.first_nonzero_index > train_end) return std::nullopt;
    const std::size_t first = *history.first_nonzero_index;
    const std::size_t last = std::min(train_end, history.size() - 1);
    const std::size_t n = last - first + 1;
    if (n < 2) return std::nullopt;
    double sum = 0.0;
    for (std::size_t t = first + 1; t <= last; ++t) {
        sum += std::abs(static_cast<double>(history.values[t] - history.values[t - 1]));
    }
    if (sum == 0.0) return std::nullopt;
    return sum / static_cast<double>(n - 1);
}

std::optional<double> spl(std::span<const double> truth, std::span<const double> q, const SalesSeries& history,
                          std::size_t train_end, double u) {
    if (truth.size() != q.size() || truth.empty()) throw DataError("spl: truth and forecast lengths differ");
    const auto scale = spl_scale(history, train_end);
    if (!scale) return std::nullopt;
    double num = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) num += pinball(truth[t], q[t], u);
    return num / static_cast<double>(truth.size()) / *scale;
}

double SeriesSpl::mean_spl() const {
    if (!valid || spl.empty()) throw DataError("series '" + series_id + "' has no valid SPL");
    return std::accumulate(spl.begin(), spl.end(), 0.0) / static_cast<double>(spl.size());
}

SeriesSpl evaluate_series(std::span<const double> truth, const QuantileForecastSet& forecast,
                          const SalesSeries& history, std::size_t train_end) {
    if (forecast.horizon() != truth.size()) throw DataError("spl: forecast horizon does not match truth");
    SeriesSpl out;
    out.series_id = history.id;
    if (!spl_scale(history, train_end)) return out;
    for (std::size_t k = 0; k < forecast.levels.size(); ++k) {
        const auto q = forecast.at_level(k);
        out.spl.push_back(*spl(truth, q, history, train_end, forecast.levels[k]));
    }
    out.valid = true;
    return out;
}

double wspl(std::span<const SeriesSpl> series) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : series) {
        if (!s.valid) continue;
        total += s.mean_spl();
        ++n;
    }
    if (n == 0) throw DataError("wspl: no valid series");
    return total / static_cast<double>(n);
}

SplReport make_report(std::vector<SeriesSpl> series) {
    SplReport r;
    r.n_valid = static_cast<std::size_t>(std::count_if(series.begin(), series.end(), [](const auto& s) { return s.valid; }));
    r.n_omitted = series.size() - r.n_valid;
    r.series = std::move(series);
    r.wspl = r.n_valid > 0 ? wspl(r.series) : std::nan("");
    return r;
}

double mse(std::span<const std::vector<double>> truth, std::span<const std::vector<double>> forecasts) {
    if (truth.size() != forecasts.size() || truth.empty()) throw DataError("mse: series counts differ or are zero");
    double total = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].size() != forecasts[i].size() || truth[i].empty()) throw DataError("mse: horizon mismatch");
        double s = 0.0;
        for (std::size_t t = 0; t < truth[i].size(); ++t) {
            const double e = truth[i][t] - forecasts[i][t];
            s += e * e;
        }
        total += s / static_cast<double>(truth[i].size());
    }
    return total / static_cast<double>(truth.size());
}

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::Mean: return "mean";
        case BaselineKind::Naive: return "naive";
        case BaselineKind::SNaive: return "snaive";
        case BaselineKind::Drift: return "drift";
    }
    return "unknown";
}

BaselineKind parse_baseline(std::string_view name) {
    for (auto k : {BaselineKind::Mean, BaselineKind::Naive, BaselineKind::SNaive, BaselineKind::Drift}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown baseline '" + std::string(name) + "'");
}

namespace {

double residual_sd(const std::vector<double>& residuals, std::size_t n_params) {
    if (residuals.size() <= n_params) return 0.0;
    double ss = 0.0;
    for (double e : residuals) ss += e * e;
    return std::sqrt(ss / static_cast<double>(residuals.size() - n_params));
}

}  // namespace

std::pair<ForecastPath, QuantileForecastSet> baseline_forecast(BaselineKind kind, const SalesSeries& history,
                                                               std::size_t train_end, int horizon,
                                                               std::span<const double> levels, int season) {
    validate_levels(levels);
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    const auto y = training_values(history, train_end);
    if (y.empty()) throw DataError("series '" + history.id + "' has no history");
    const std::size_t T = y.size();
    const auto m = static_cast<std::size_t>(season);
    if (kind == BaselineKind::SNaive && (season < 1 || T < m)) {
        throw DataError("series '" + history.id + "' is shorter than one season");
    }

    ForecastPath path{history.id, {}};
    std::vector<double> sd(static_cast<std::size_t>(horizon), 0.0);
    std::vector<double> res;
    switch (kind) {
        case BaselineKind::Mean: {
            const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(T);
            for (double v : y) res.push_back(v - mean);
            // Residuals of the mean model: sample sd, with the n-1 correction.
            const double sigma = residual_sd(res, 1);
            for (int k = 0; k < horizon; ++k) {
                path.values.push_back(mean);
                sd[static_cast<std::size_t>(k)] = sigma * std::sqrt(1.0 + 1.0 / static_cast<double>(T));
            }
            break;
        }
        case BaselineKind::Naive: {
            for (std::size_t t = 1; t < T; ++t) res.push_back(y[t] - y[t - 1]);
            const double sigma = residual_sd(res, 0);
            for (int k = 1; k <= horizon; ++k) {
                path.values.push_back(y.back());
                sd[static_cast<std::size_t>(k - 1)] = sigma * std::sqrt(static_cast<double>(k));
            }
            break;
        }
        case BaselineKind::SNaive: {
            for (std::size_t t = m; t < T; ++t) res.push_back(y[t] - y[t - m]);
            const double sigma = residual_sd(res, 0);
            for (int k = 1; k <= horizon; ++k) {
                const auto back = m - static_cast<std::size_t>((k - 1) % season);
                path.values.push_back(y[T - back]);
                const double cycles = std::floor(static_cast<double>(k - 1) / season) + 1.0;
                sd[static_cast<std::size_t>(k - 1)] = sigma * std::sqrt(cycles);
            }
            break;
        }
        case BaselineKind::Drift: {
            const double slope = T > 1 ? (y.back() - y.front()) / static_cast<double>(T - 1) : 0.0;
            for (std::size_t t = 1; t < T; ++t) res.push_back(y[t] - y[t - 1] - slope);
            const double sigma = residual_sd(res, 1);
            const double tm1 = static_cast<double>(std::max<std::size_t>(T - 1, 1));
            for (int k = 1; k <= horizon; ++k) {
                path.values.push_back(y.back() + k * slope);
                sd[static_cast<std::size_t>(k - 1)] = sigma * std::sqrt(k * (1.0 + k / tm1));
            }
            break;
        }
    }

    QuantileForecastSet q;
    q.series_id = history.id;
    q.levels.assign(levels.begin(), levels.end());
    const boost::math::normal_distribution<double> standard;
    std::vector<double> z;
    for (double u : levels) z.push_back(boost::math::quantile(standard, u));
    for (int k = 0; k < horizon; ++k) {
        std::vector<std::int64_t> row;
        for (double zu : z) {
            const double v = path.values[static_cast<std::size_t>(k)] + zu * sd[static_cast<std::size_t>(k)];
            row.push_back(static_cast<std::int64_t>(std::llround(std::max(0.0, v))));
        }
        q.values.push_back(std::move(row));
    }
    return {std::move(path), std::move(q)};
}

void enforce_monotone(QuantileForecastSet& set) {
    for (auto& row : set.values) std::sort(row.begin(), row.end());
}

const gbt::GbtModel& DirectQuantileModels::model(std::size_t level, int step) const {
    if (level >= levels_.size() || step < 1 || step > horizon_) throw DataError("no direct model for that pair");
    return models_[static_cast<std::size_t>(step - 1) * levels_.size() + level];
}

QuantileForecastSet DirectQuantileModels::predict(const SalesSeries& series, std::size_t train_end) const {
    const auto history = training_values(series, train_end);
    std::vector<double> window(n_lags_);
    lag_window(history, history.size(), window);
    QuantileForecastSet out;
    out.series_id = series.id;
    out.levels = levels_;
    for (int k = 1; k <= horizon_; ++k) {
        std::vector<std::int64_t> row;
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            const double v = model(l, k).predict(window);
            if (!std::isfinite(v)) throw NumericalError("direct quantile model produced a non-finite value");
            row.push_back(static_cast<std::int64_t>(std::llround(std::max(0.0, v))));
        }
        out.values.push_back(std::move(row));
    }
    enforce_monotone(out);
    return out;
}

DirectQuantileModels fit_direct_quantile_gbt(std::span<const SalesSeries> series, std::size_t train_end, int n_lags,
                                             std::span<const double> levels, int horizon,
                                             const gbt::GbtParams& params, std::uint64_t seed, PadPolicy pad) {
    validate_levels(levels);
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    DirectQuantileModels out;
    out.levels_.assign(levels.begin(), levels.end());
    out.horizon_ = horizon;
    out.n_lags_ = static_cast<std::size_t>(n_lags);
    for (int k = 1; k <= horizon; ++k) {
        const auto matrix = embed_shifted(series, train_end, n_lags, k - 1, pad);
        if (matrix.rows() == 0) throw DataError("no training rows for direct step " + std::to_string(k));
        const auto binned = gbt::bin_features(matrix, params.max_bins);
        for (double u : levels) {
            out.models_.push_back(gbt::fit_gbt(binned, matrix.targets, gbt::LossSpec::pinball(u), params,
                                               seed + static_cast<std::uint64_t>(k)));
        }
    }
    return out;
}

}  // namespace tdcast
