#include "internal.hpp"
#include "tdcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tdcast::gbt {

double moment_dispersion(std::span<const double> targets, double r_lower, double r_upper) {
    if (targets.size() < 2) return r_upper;
    const double n = static_cast<double>(targets.size());
    const double m = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : targets) ss += (x - m) * (x - m);
    const double v = ss / (n - 1.0);
    if (v <= m) return r_upper;
    return std::clamp(m * m / (v - m), r_lower, r_upper);
}

double minimize_dispersion(std::span<const double> targets, std::span<const double> raw_scores, double r_lower,
                           double r_upper) {
    if (targets.size() != raw_scores.size()) throw DataError("dispersion fit: length mismatch");
    if (!(r_lower > 0.0 && r_upper > r_lower)) throw ConfigError("invalid dispersion bracket");
    const double lo = std::log(r_lower);
    const double hi = std::log(r_upper);
    auto objective = [&](double log_r) { return nb_nll(targets, raw_scores, std::exp(log_r)); };

    // Coarse scan locates the basin; golden-section search refines inside it.
    constexpr int kGrid = 48;
    std::vector<double> grid(kGrid + 1), values(kGrid + 1);
    for (int k = 0; k <= kGrid; ++k) {
        grid[k] = lo + (hi - lo) * k / kGrid;
        values[k] = objective(grid[k]);
    }
    const auto best = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
    double a = grid[std::max(best - 1, 0)];
    double b = grid[std::min(best + 1, kGrid)];

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = objective(c), fd = objective(d);
    while (b - a > 1e-9) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    double log_r = 0.5 * (a + b);
    if (values[best] < objective(log_r)) log_r = grid[best];
    return std::exp(log_r);
}

NegBinFit fit_gbt_negbin(const BinnedData& data, std::span<const double> targets, const GbtParams& params,
                         std::uint64_t seed, const NegBinOptions& opts) {
    if (opts.max_outer < 1) throw ConfigError("max_outer must be >= 1");
    if (!std::any_of(targets.begin(), targets.end(), [](double x) { return x > 0.0; })) {
        throw DataError("negative-binomial fit needs at least one positive count");
    }
    double r = opts.r_init ? std::clamp(*opts.r_init, opts.r_lower, opts.r_upper)
                           : moment_dispersion(targets, opts.r_lower, opts.r_upper);

    NegBinFit out;
    double best_nll = std::numeric_limits<double>::infinity();
    NegBinFit best;
    for (int it = 1; it <= opts.max_outer; ++it) {
        out.r_path.push_back(r);
        GbtModel model = fit_gbt(data, targets, LossSpec::negbin(r), params, seed);
        const auto raw = predict_binned_raw(model, data);
        const double r_new = minimize_dispersion(targets, raw, opts.r_lower, opts.r_upper);
        const double nll = nb_nll(targets, raw, r_new);
        model.set_r_hat(r_new);

        const bool converged = std::abs(std::log(r_new) - std::log(r)) < opts.tol;
        if (nll < best_nll) {
            best_nll = nll;
            best.model = model;
            best.r = r_new;
            best.iterations = it;
        }
        if (converged || it == opts.max_outer) {
            out.model = std::move(model);
            out.r = r_new;
            out.iterations = it;
            out.converged = converged;
            break;
        }
        r = r_new;
    }
    out.r_path.push_back(out.r);
    if (!out.converged && opts.max_outer > 1) {
        best.r_path = std::move(out.r_path);
        best.converged = false;
        best.warning = true;
        return best;
    }
    return out;
}

NegBinFit fit_gbt_negbin(const LagMatrix& matrix, const GbtParams& params, std::uint64_t seed,
                         const NegBinOptions& opts) {
    if (matrix.rows() == 0) throw DataError("cannot fit a gbt model on an empty matrix");
    const auto data = bin_features(matrix, params.max_bins);
    return fit_gbt_negbin(data, matrix.targets, params, seed, opts);
}

}  // namespace tdcast::gbt
