#include "tdcast/features.hpp"

#include "tdcast/errors.hpp"

#include <algorithm>
#include <cmath>

namespace tdcast {

PadPolicy parse_pad_policy(std::string_view name) {
    if (name == "zero" || name == "zeropad") return PadPolicy::ZeroPad;
    if (name == "drop") return PadPolicy::Drop;
    throw ConfigError("unknown pad policy '" + std::string(name) + "'");
}

void lag_window(std::span<const double> history, std::size_t t, std::span<double> out) {
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = t >= k + 1 ? history[t - k - 1] : 0.0;
    }
}

LagMatrix embed_shifted(std::span<const SalesSeries> series, std::size_t train_end, int n_lags, int shift,
                        PadPolicy pad) {
    if (n_lags <= 0) throw ConfigError("n_lags must be >= 1");
    if (shift < 0) throw ConfigError("target shift must be >= 0");
    const auto p = static_cast<std::size_t>(n_lags);
    const auto s = static_cast<std::size_t>(shift);

    LagMatrix m;
    m.n_lags = p;
    std::vector<double> history;
    for (const auto& ser : series) {
        history = training_values(ser, train_end);
        const std::size_t first = pad == PadPolicy::Drop ? p : 0;
        const auto idx = static_cast<std::uint32_t>(m.series_ids.size());
        m.series_ids.push_back(ser.id);
        bool any = false;
        for (std::size_t t = first; t + s < history.size(); ++t) {
            const std::size_t base = m.features.size();
            m.features.resize(base + p);
            lag_window(history, t, {m.features.data() + base, p});
            m.targets.push_back(history[t + s]);
            m.series_index.push_back(idx);
            m.target_time.push_back(static_cast<std::uint32_t>(t + s));
            any = true;
        }
        if (!any && pad == PadPolicy::Drop) m.skipped.push_back(ser.id);
    }
    return m;
}

LagMatrix embed(std::span<const SalesSeries> series, std::size_t train_end, int n_lags, PadPolicy pad) {
    return embed_shifted(series, train_end, n_lags, 0, pad);
}

ForecastPath recursive_forecast(const PointModel& model, const SalesSeries& series, std::size_t train_end,
                                int horizon) {
    if (series.size() == 0) throw DataError("series '" + series.id + "' has no observations");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    const std::size_t p = model.n_lags();

    std::vector<double> history = training_values(series, train_end);
    history.reserve(history.size() + static_cast<std::size_t>(horizon));
    std::vector<double> window(p);

    ForecastPath path;
    path.series_id = series.id;
    path.values.reserve(static_cast<std::size_t>(horizon));
    for (int k = 0; k < horizon; ++k) {
        lag_window(history, history.size(), window);
        const double y = model.predict(window);
        if (!std::isfinite(y)) {
            throw NumericalError("non-finite prediction for series '" + series.id + "' at step " +
                                 std::to_string(k + 1));
        }
        const double clamped = std::max(0.0, y);
        path.values.push_back(clamped);
        history.push_back(clamped);
    }
    return path;
}

ForecastPath average_paths(std::span<const ForecastPath> paths) {
    if (paths.empty()) throw DataError("no forecast paths to average");
    ForecastPath out{paths.front().series_id, std::vector<double>(paths.front().values.size(), 0.0)};
    for (const auto& p : paths) {
        if (p.values.size() != out.values.size()) throw DataError("forecast paths differ in length");
        for (std::size_t k = 0; k < p.values.size(); ++k) out.values[k] += p.values[k];
    }
    for (auto& v : out.values) v /= static_cast<double>(paths.size());
    return out;
}

}  // namespace tdcast
