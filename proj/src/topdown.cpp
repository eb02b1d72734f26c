#include "tdcast/topdown.hpp"

#include "csv.hpp"
#include "format.hpp"
#include "tdcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace tdcast {

double ProportionMap::at(const std::string& aggregate, const std::string& child) const {
    const auto it = rho.find(aggregate);
    if (it != rho.end()) {
        const auto jt = it->second.find(child);
        if (jt != it->second.end()) return jt->second;
    }
    throw DataError("no proportion for child '" + child + "' of '" + aggregate + "'");
}

ProportionMap compute_proportions(const Dataset& dataset) {
    ProportionMap out;
    const std::size_t last = dataset.train_end();
    for (std::size_t j = 0; j < dataset.aggregate().size(); ++j) {
        const auto& agg = dataset.aggregate()[j];
        Count total = 0;
        for (std::size_t t = 0; t <= last; ++t) total += agg.values[t];
        const auto& kids = dataset.children(j);
        auto& shares = out.rho[agg.id];
        if (total == 0) {
            out.uniform_fallback.insert(agg.id);
            for (auto i : kids) shares[dataset.lower()[i].id] = 1.0 / static_cast<double>(kids.size());
            continue;
        }
        for (auto i : kids) {
            Count part = 0;
            const auto& child = dataset.lower()[i];
            for (std::size_t t = 0; t <= last; ++t) part += child.values[t];
            shares[child.id] = static_cast<double>(part) / static_cast<double>(total);
        }
    }
    return out;
}

std::vector<ForecastPath> disaggregate(const ForecastPath& aggregate_path, const ProportionMap& proportions,
                                       const HierarchyMap& hierarchy) {
    const auto it = hierarchy.children_of.find(aggregate_path.series_id);
    if (it == hierarchy.children_of.end()) {
        throw DataError("aggregate '" + aggregate_path.series_id + "' is not in the hierarchy");
    }
    std::vector<ForecastPath> out;
    out.reserve(it->second.size());
    for (const auto& child : it->second) {
        const double rho = proportions.at(aggregate_path.series_id, child);
        ForecastPath path{child, aggregate_path.values};
        for (auto& v : path.values) v *= rho;
        out.push_back(std::move(path));
    }
    return out;
}

std::string to_string(Distribution d) { return d == Distribution::Poisson ? "poisson" : "negbin"; }

Distribution parse_distribution(std::string_view name) {
    if (name == "poisson") return Distribution::Poisson;
    if (name == "negbin" || name == "nb") return Distribution::NegBin;
    throw ConfigError("unknown distribution '" + std::string(name) + "'");
}

double in_sample_variance(const SalesSeries& history, std::size_t train_end, std::optional<std::size_t> window) {
    const auto values = training_values(history, train_end);
    std::size_t begin = 0;
    if (window && *window > 0 && *window < values.size()) begin = values.size() - *window;
    const std::size_t n = values.size() - begin;
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (std::size_t t = begin; t < values.size(); ++t) mean += values[t];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t t = begin; t < values.size(); ++t) ss += (values[t] - mean) * (values[t] - mean);
    return ss / static_cast<double>(n - 1);
}

namespace {

void check_point(const ForecastPath& point) {
    for (std::size_t k = 0; k < point.values.size(); ++k) {
        const double y = point.values[k];
        if (!std::isfinite(y) || y < 0.0) {
            throw NumericalError("point forecast for '" + point.series_id + "' at step " + std::to_string(k + 1) +
                                 " is negative or non-finite");
        }
    }
}

StepParams poisson_step(double mean, bool fallback) {
    return {.dist = Distribution::Poisson, .lambda = mean, .r = 0.0, .p = 1.0, .fallback = fallback};
}

}  // namespace

DistributionParams estimate_params(const ForecastPath& point, const SalesSeries& history, std::size_t train_end,
                                   Distribution dist, std::optional<std::size_t> variance_window) {
    check_point(point);
    DistributionParams out;
    out.series_id = point.series_id;
    out.steps.reserve(point.values.size());
    if (dist == Distribution::Poisson) {
        for (double y : point.values) out.steps.push_back(poisson_step(y, false));
        return out;
    }
    const double v = in_sample_variance(history, train_end, variance_window);
    out.variance_estimate = v;
    for (double y : point.values) {
        if (y == 0.0 || v <= y) {
            out.steps.push_back(poisson_step(y, true));
            continue;
        }
        const double p = y / v;
        out.steps.push_back({.dist = Distribution::NegBin, .lambda = y, .r = y * p / (1.0 - p), .p = p, .fallback = false});
    }
    return out;
}

DistributionParams estimate_params_shared_p(const ForecastPath& point, const DistributionParams& parent) {
    check_point(point);
    if (parent.steps.size() != point.values.size()) throw DataError("parent parameters do not match the horizon");
    DistributionParams out;
    out.series_id = point.series_id;
    out.variance_estimate = parent.variance_estimate;
    for (std::size_t k = 0; k < point.values.size(); ++k) {
        const double y = point.values[k];
        const auto& ps = parent.steps[k];
        if (ps.dist == Distribution::Poisson || y == 0.0) {
            out.steps.push_back(poisson_step(y, true));
            continue;
        }
        out.steps.push_back(
            {.dist = Distribution::NegBin, .lambda = y, .r = y * ps.p / (1.0 - ps.p), .p = ps.p, .fallback = false});
    }
    return out;
}

std::vector<double> QuantileForecastSet::at_level(std::size_t level) const {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& row : values) out.push_back(static_cast<double>(row.at(level)));
    return out;
}

std::vector<double> m5_quantile_levels() { return {0.005, 0.025, 0.165, 0.25, 0.5, 0.75, 0.835, 0.975, 0.995}; }

std::vector<double> retail_quantile_levels() { return {0.1, 0.9}; }

void validate_levels(std::span<const double> levels) {
    if (levels.empty()) throw ConfigError("no quantile levels");
    for (std::size_t k = 0; k < levels.size(); ++k) {
        if (!(levels[k] > 0.0 && levels[k] < 1.0)) throw ConfigError("quantile level outside (0, 1)");
        if (k > 0 && !(levels[k] > levels[k - 1])) throw ConfigError("quantile levels must be strictly increasing");
    }
}

namespace {

// Walks the pmf upward from a point whose lower tail is negligible, assigning each level
// the first k with CDF(k) >= u. Levels not reached by mean + 50 sd get the cap.
template <typename LogPmf>
std::vector<std::int64_t> count_quantiles(double mean, double sd, std::span<const double> levels, LogPmf&& log_pmf) {
    validate_levels(levels);
    std::vector<std::int64_t> out(levels.size(), 0);
    if (mean <= 0.0) return out;
    const auto cap = static_cast<std::int64_t>(std::ceil(mean + 50.0 * sd));
    const auto start = static_cast<std::int64_t>(std::max(0.0, std::floor(mean - 40.0 * sd)));
    double cdf = 0.0;
    std::size_t next = 0;
    for (std::int64_t k = start; k <= cap && next < levels.size(); ++k) {
        cdf += std::exp(log_pmf(static_cast<double>(k)));
        while (next < levels.size() && cdf >= levels[next]) out[next++] = k;
    }
    for (; next < levels.size(); ++next) out[next] = cap;
    return out;
}

}  // namespace

std::vector<std::int64_t> poisson_quantiles(double lambda, std::span<const double> levels) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw NumericalError("poisson rate must be finite and >= 0");
    const double log_lambda = lambda > 0.0 ? std::log(lambda) : 0.0;
    return count_quantiles(lambda, std::sqrt(lambda), levels,
                           [&](double k) { return k * log_lambda - lambda - std::lgamma(k + 1.0); });
}

std::vector<std::int64_t> negbin_quantiles(double r, double p, std::span<const double> levels) {
    if (!(r > 0.0) || !(p > 0.0 && p <= 1.0)) throw NumericalError("invalid negative-binomial parameters");
    const double mean = r * (1.0 - p) / p;
    const double sd = std::sqrt(mean / p);
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    const double lg_r = std::lgamma(r);
    return count_quantiles(mean, sd, levels, [&](double k) {
        return std::lgamma(r + k) - lg_r - std::lgamma(k + 1.0) + r * log_p + k * log_q;
    });
}

QuantileForecastSet quantiles(const DistributionParams& params, std::span<const double> levels) {
    validate_levels(levels);
    QuantileForecastSet out;
    out.series_id = params.series_id;
    out.levels.assign(levels.begin(), levels.end());
    out.values.reserve(params.steps.size());
    for (const auto& s : params.steps) {
        out.values.push_back(s.dist == Distribution::Poisson ? poisson_quantiles(s.lambda, levels)
                                                              : negbin_quantiles(s.r, s.p, levels));
    }
    return out;
}

QuantileForecastSet in_sample_quantiles(const SalesSeries& history, std::size_t train_end,
                                        std::span<const double> levels, int horizon) {
    validate_levels(levels);
    auto values = training_values(history, train_end);
    if (values.empty()) throw DataError("series '" + history.id + "' has no training observations");
    std::sort(values.begin(), values.end());
    std::vector<std::int64_t> row;
    for (double u : levels) {
        const auto k = static_cast<std::size_t>(
            std::clamp(std::ceil(u * static_cast<double>(values.size())), 1.0, static_cast<double>(values.size())));
        row.push_back(static_cast<std::int64_t>(values[k - 1]));
    }
    QuantileForecastSet out;
    out.series_id = history.id;
    out.levels.assign(levels.begin(), levels.end());
    out.values.assign(static_cast<std::size_t>(horizon), row);
    return out;
}

void write_quantiles_csv_header(std::ostream& out) { out << "series_id,step,u,quantile\n"; }

void write_quantiles_csv(std::ostream& out, const QuantileForecastSet& set) {
    for (std::size_t t = 0; t < set.values.size(); ++t) {
        for (std::size_t k = 0; k < set.levels.size(); ++k) {
            out << set.series_id << ',' << t + 1 << ',' << format_double(set.levels[k]) << ',' << set.values[t][k]
                << '\n';
        }
    }
}

std::map<std::string, QuantileForecastSet> read_quantiles_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!csv::next_line(in, line, line_no)) throw DataError("empty quantile file");
    const auto header = csv::split(line);
    if (header.size() != 4 || header[0] != "series_id" || header[1] != "step" || header[2] != "u" ||
        header[3] != "quantile") {
        throw DataError("line 1: expected header series_id,step,u,quantile");
    }
    std::map<std::string, std::map<std::pair<long long, double>, std::int64_t>> cells;
    while (csv::next_line(in, line, line_no)) {
        const auto f = csv::split(line);
        const auto step = f.size() == 4 ? csv::to_int(f[1]) : std::nullopt;
        const auto u = f.size() == 4 ? csv::to_double(f[2]) : std::nullopt;
        const auto q = f.size() == 4 ? csv::to_double(f[3]) : std::nullopt;
        if (!step || !u || !q || *step < 1) throw DataError("line " + std::to_string(line_no) + ": malformed row");
        cells[std::string(f[0])][{*step, *u}] = static_cast<std::int64_t>(std::llround(*q));
    }
    std::map<std::string, QuantileForecastSet> out;
    for (const auto& [id, grid] : cells) {
        QuantileForecastSet set;
        set.series_id = id;
        std::vector<long long> steps;
        for (const auto& [key, q] : grid) {
            if (std::find(set.levels.begin(), set.levels.end(), key.second) == set.levels.end()) {
                set.levels.push_back(key.second);
            }
            if (steps.empty() || steps.back() != key.first) steps.push_back(key.first);
        }
        std::sort(set.levels.begin(), set.levels.end());
        for (std::size_t t = 0; t < steps.size(); ++t) {
            if (steps[t] != static_cast<long long>(t + 1)) throw DataError("series '" + id + "' has missing steps");
            std::vector<std::int64_t> row;
            for (double u : set.levels) {
                const auto it = grid.find({steps[t], u});
                if (it == grid.end()) throw DataError("series '" + id + "' has missing quantiles");
                row.push_back(it->second);
            }
            set.values.push_back(std::move(row));
        }
        out.emplace(id, std::move(set));
    }
    return out;
}

void write_params_csv_header(std::ostream& out) { out << "series_id,step,dist,lambda_or_r,p,variance,fallback\n"; }

void write_params_csv(std::ostream& out, const DistributionParams& params) {
    for (std::size_t t = 0; t < params.steps.size(); ++t) {
        const auto& s = params.steps[t];
        out << params.series_id << ',' << t + 1 << ',' << to_string(s.dist) << ','
            << format_double(s.dist == Distribution::Poisson ? s.lambda : s.r) << ','
            << (s.dist == Distribution::Poisson ? std::string() : format_double(s.p)) << ','
            << format_double(params.variance_estimate) << ',' << (s.fallback ? 1 : 0) << '\n';
    }
}

}  // namespace tdcast
