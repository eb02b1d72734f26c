// Acceptance run: one PASS/FAIL line per criterion.
#include "tdcast/config.hpp"
#include "tdcast/demand.hpp"
#include "tdcast/eval.hpp"
#include "tdcast/experiments.hpp"
#include "tdcast/features.hpp"
#include "tdcast/gbt/booster.hpp"
#include "tdcast/gbt/loss.hpp"
#include "tdcast/linear.hpp"
#include "tdcast/synthetic.hpp"
#include "tdcast/topdown.hpp"

#include <Eigen/Dense>
#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace tdcast;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double peak_rss_mb() {
    rusage u{};
    getrusage(RUSAGE_SELF, &u);
    return static_cast<double>(u.ru_maxrss) / 1024.0;
}

fs::path work_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("tdcast_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const MetricRow* find_row(const std::vector<MetricRow>& rows, const std::string& group, const std::string& model,
                          const std::string& metric) {
    for (const auto& r : rows) {
        if (r.group == group && r.model == model && r.metric == metric) return &r;
    }
    return nullptr;
}

/// Worst relative gap between the summed child paths and their aggregate path.
double coherence_gap(const RunResult& result, const Dataset& ds, std::size_t& checked) {
    double worst = 0.0;
    for (const auto& cls : result.classes) {
        for (const auto& [model, agg] : cls.aggregate_paths) {
            const auto& lower = cls.lower_paths.at(model);
            std::map<std::string, const ForecastPath*> by_id;
            for (const auto& l : lower) by_id[l.series_id] = &l;
            for (const auto& a : agg) {
                for (std::size_t t = 0; t < a.values.size(); ++t) {
                    long double sum = 0.0L;
                    for (const auto& child : ds.hierarchy().children_of.at(a.series_id)) sum += by_id.at(child)->values[t];
                    const double gap = std::abs(static_cast<double>(sum) - a.values[t]) / std::max(1e-300, std::abs(a.values[t]));
                    if (a.values[t] != 0.0 || sum != 0.0L) worst = std::max(worst, gap);
                    ++checked;
                }
            }
        }
    }
    return worst;
}

// 1. Gradient and Hessian of the negative-binomial loss against finite differences.
Outcome nb_loss_derivatives() {
    // f-dependent part of the NLL in long double: (x + r) ln(r + e^f) - x f
    auto nll = [](long double x, long double f, long double r) { return (x + r) * std::log(r + std::exp(f)) - x * f; };
    auto d1 = [&](long double x, long double f, long double r, long double h) {
        return (nll(x, f + h, r) - nll(x, f - h, r)) / (2 * h);
    };
    auto d2 = [&](long double x, long double f, long double r, long double h) {
        return (nll(x, f + h, r) - 2 * nll(x, f, r) + nll(x, f - h, r)) / (h * h);
    };
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ux(0.0, 50.0), uf(-3.0, 3.0), ulr(std::log(0.1), std::log(100.0));
    double worst_g = 0.0, worst_h = 0.0;
    const int n = 5000;
    for (int i = 0; i < n; ++i) {
        const double x = std::round(ux(rng)), f = uf(rng), r = std::exp(ulr(rng));
        const auto gh = gbt::loss_grad_hess(gbt::LossSpec::negbin(r), x, f);
        const long double h = 1e-3L;
        const long double g_fd = (4 * d1(x, f, r, h / 2) - d1(x, f, r, h)) / 3;
        const long double h_fd = (4 * d2(x, f, r, h / 2) - d2(x, f, r, h)) / 3;
        worst_g = std::max(worst_g, static_cast<double>(std::abs(gh.g - g_fd) / std::max({std::abs(g_fd), std::abs(static_cast<long double>(gh.g)), 1e-9L})));
        worst_h = std::max(worst_h, static_cast<double>(std::abs(gh.h - h_fd) / std::max({std::abs(h_fd), std::abs(static_cast<long double>(gh.h)), 1e-9L})));
    }
    // the library NLL itself must agree with the oracle up to an f-independent constant
    double worst_shift = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double x = std::round(ux(rng)), r = std::exp(ulr(rng));
        const double f1 = uf(rng), f2 = uf(rng);
        const double lib = gbt::nb_nll_point(x, f1, r) - gbt::nb_nll_point(x, f2, r);
        const double ref = static_cast<double>(nll(x, f1, r) - nll(x, f2, r));
        worst_shift = std::max(worst_shift, std::abs(lib - ref) / std::max(1.0, std::abs(ref)));
    }
    return {worst_g < 1e-6 && worst_h < 1e-6 && worst_shift < 1e-10,
            fmt("%d triples, max rel err grad %.2e, hess %.2e, nll diff %.2e", n, worst_g, worst_h, worst_shift)};
}

// 2. Dispersion recovery on NB(3, 0.4) with constant features.
Outcome dispersion_recovery() {
    int inside = 0;
    double worst_grid = 0.0;
    std::vector<double> estimates;
    for (int run = 0; run < 20; ++run) {
        std::mt19937_64 rng(1000 + run);
        LagMatrix m;
        m.n_lags = 1;
        const std::size_t n = 10000;
        m.features.assign(n, 1.0);
        m.targets.resize(n);
        for (auto& y : m.targets) y = static_cast<double>(synth::negbin_draw(3.0, 0.4, rng));
        m.series_index.assign(n, 0);
        m.target_time.resize(n);
        std::iota(m.target_time.begin(), m.target_time.end(), 0u);
        m.series_ids = {"nb"};
        const auto fit = gbt::fit_gbt_negbin(m, gbt::GbtParams{}, static_cast<std::uint64_t>(run));
        estimates.push_back(fit.r);
        if (fit.r >= 2.4 && fit.r <= 3.6) ++inside;
        // grid-scan oracle at the sample-mean log link, summed over the histogram of counts
        const double mean = std::accumulate(m.targets.begin(), m.targets.end(), 0.0) / n;
        std::map<double, double> hist;
        for (double y : m.targets) hist[y] += 1.0;
        auto nll = [&](double r) {
            double total = 0.0;
            for (const auto& [y, c] : hist) total += c * gbt::nb_nll_point(y, std::log(mean), r);
            return total;
        };
        double best_r = 0.0, best = INFINITY;
        for (double lr = std::log(0.5); lr <= std::log(50.0); lr += 1e-4) {
            const double v = nll(std::exp(lr));
            if (v < best) {
                best = v;
                best_r = std::exp(lr);
            }
        }
        worst_grid = std::max(worst_grid, std::abs(std::log(fit.r / best_r)));
    }
    const auto [lo, hi] = std::minmax_element(estimates.begin(), estimates.end());
    return {inside >= 19 && worst_grid < 0.05,
            fmt("%d/20 runs with r in [2.4, 3.6] (range %.3f..%.3f), max |ln(r/r_grid)| %.2e", inside, *lo, *hi,
                worst_grid)};
}

// 3. Streaming normal equations against a dense QR fit.
Outcome normal_equation_parity() {
    std::mt19937_64 rng(77);
    std::poisson_distribution<int> pois(4.0);
    std::vector<SalesSeries> series;
    for (int i = 0; i < 10; ++i) {
        std::vector<Count> v(200);
        for (auto& x : v) x = pois(rng);
        series.push_back(SalesSeries::make("s" + std::to_string(i), Date{std::chrono::year{2020} / 1 / 1}, v));
    }
    const auto matrix = embed(series, 199, 100, PadPolicy::Drop);
    const auto model = solve_ols(accumulate_series(series, 199, 100, PadPolicy::Drop));
    const auto n = static_cast<Eigen::Index>(matrix.rows());
    Eigen::MatrixXd z(n, 101);
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        z(r, 0) = 1.0;
        const auto row = matrix.row(static_cast<std::size_t>(r));
        for (Eigen::Index j = 0; j < 100; ++j) z(r, j + 1) = row[static_cast<std::size_t>(j)];
        y(r) = matrix.targets[static_cast<std::size_t>(r)];
    }
    const Eigen::VectorXd oracle = z.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd want = z * oracle;
    double worst = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
        const double got = model.predict(matrix.row(static_cast<std::size_t>(r)));
        worst = std::max(worst, std::abs(got - want(r)) / std::max(1.0, std::abs(want(r))));
    }
    const double coef = (model.beta() - oracle).norm() / oracle.norm();
    return {n == 1000 && worst < 1e-7,
            fmt("%lld rows x 101 features, max rel prediction gap %.2e, coefficient gap %.2e", static_cast<long long>(n),
                worst, coef)};
}

// 4. Top-down coherence on the toy hierarchy and a 200-aggregate item/store subset.
Outcome coherence() {
    auto config = build_config({{"models", "pr,gbt-poisson"}, {"gbt_num_trees", "20"}, {"write_forecasts", "false"},
                                {"output", work_dir("c4").string()}});
    auto toy = synth::poisson_hierarchy(10, 3, 400, 4);
    const auto toy_ds = Dataset::make(std::move(toy.lower), toy.parent_of, 28, true);
    std::size_t checked_toy = 0, checked_m5 = 0;
    const double gap_toy = coherence_gap(run_topdown(config, toy_ds), toy_ds, checked_toy);

    config.models = {"pr"};
    auto m5 = synth::m5_like(200, 10, 1941, 10);
    const auto m5_ds = Dataset::make(std::move(m5.lower), m5.parent_of, 28, true);
    const double gap_m5 = coherence_gap(run_topdown(config, m5_ds), m5_ds, checked_m5);
    return {gap_toy <= 1e-9 && gap_m5 <= 1e-9 && checked_toy > 0 && checked_m5 >= 200 * 28,
            fmt("toy: %zu steps, max rel gap %.2e; %zu aggregates x %zu children: %zu steps, max rel gap %.2e",
                checked_toy, gap_toy, m5_ds.aggregate().size(), m5_ds.lower().size() / m5_ds.aggregate().size(),
                checked_m5, gap_m5)};
}

// 5. Quantile oracle.
Outcome quantile_oracle() {
    const std::vector<double> u2 = {0.1, 0.9};
    const auto pq = poisson_quantiles(1.0, u2);
    const auto levels = m5_quantile_levels();
    const auto nq = negbin_quantiles(2.0, 0.5, levels);
    bool nb_ok = true;
    std::string shown;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        long double pmf = 0.25L, cdf = pmf;  // p^r
        std::int64_t k = 0;
        while (cdf < levels[i]) {
            pmf *= (k + 2.0L) / (k + 1) * 0.5L;
            cdf += pmf;
            ++k;
        }
        nb_ok = nb_ok && k == nq[i];
        shown += std::to_string(nq[i]) + (i + 1 < levels.size() ? "," : "");
    }
    return {pq == std::vector<std::int64_t>{0, 2} && nb_ok,
            fmt("Poisson(1) -> (%lld, %lld); NB(2, 0.5) -> [%s] %s", static_cast<long long>(pq[0]),
                static_cast<long long>(pq[1]), shown.c_str(), nb_ok ? "matches brute force" : "MISMATCH")};
}

// 6. SPL and WSPL oracles.
Outcome spl_oracle() {
    const Date d0{std::chrono::year{2020} / 1 / 1};
    const auto h = SalesSeries::make("s", d0, {0, 1, 3});
    const std::vector<double> y = {2}, q = {5};
    const auto example = spl(y, q, h, 2, 0.9);
    const bool example_ok = example && std::abs(*example - 0.15) < 1e-15;

    std::mt19937_64 rng(6);
    const auto levels = m5_quantile_levels();
    std::vector<SeriesSpl> scored;
    long double flat = 0.0L;
    std::size_t n_valid = 0, expected_omitted = 0;
    for (int i = 0; i < 200; ++i) {
        std::vector<Count> hv(100);
        for (auto& v : hv) v = static_cast<Count>(rng() % 6);
        if (i % 25 == 0) hv.assign(100, 0);
        if (i % 25 == 1) {
            hv.assign(100, 0);
            std::fill(hv.begin() + 50, hv.end(), 3);  // constant after first sale: zero denominator
        }
        const auto s = SalesSeries::make("s" + std::to_string(i), d0, hv);
        std::vector<double> truth(28);
        for (auto& v : truth) v = static_cast<double>(rng() % 6);
        QuantileForecastSet f{s.id, levels, {}};
        for (int t = 0; t < 28; ++t) {
            std::vector<std::int64_t> row(levels.size());
            for (auto& v : row) v = static_cast<std::int64_t>(rng() % 7);
            std::sort(row.begin(), row.end());
            f.values.push_back(row);
        }
        scored.push_back(evaluate_series(truth, f, s, 99));
        const auto first = std::find_if(hv.begin(), hv.end(), [](Count v) { return v > 0; });
        long double diffs = 0.0L;
        if (first != hv.end()) {
            for (auto it = first + 1; it != hv.end(); ++it) diffs += std::abs(*it - *(it - 1));
        }
        if (first == hv.end() || diffs == 0.0L) {
            ++expected_omitted;
            continue;
        }
        const long double scale = diffs / static_cast<long double>(hv.end() - first - 1);
        long double sum = 0.0L;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            for (int t = 0; t < 28; ++t) {
                const long double e = truth[t] - static_cast<long double>(f.values[t][k]);
                sum += e >= 0 ? levels[k] * e : (levels[k] - 1.0L) * e;
            }
        }
        flat += sum / (28.0L * levels.size() * scale);
        ++n_valid;
    }
    const auto report = make_report(scored);
    const double gap = std::abs(report.wspl - static_cast<double>(flat / n_valid));
    return {example_ok && gap < 1e-12 && report.n_omitted == expected_omitted && expected_omitted == 16,
            fmt("example SPL %.17g; WSPL gap to flat re-summation %.2e; omitted %zu of %zu (expected %zu)",
                example.value_or(NAN), gap, report.n_omitted, scored.size(), expected_omitted)};
}

// 7. Demand-class archetypes.
Outcome demand_archetypes() {
    const Date d0{std::chrono::year{2020} / 1 / 1};
    const std::size_t days = 700;
    std::vector<Count> constant(days, 5), dense_erratic(days), sparse_steady(days, 0), sparse_erratic(days, 0);
    for (std::size_t t = 0; t < days; ++t) dense_erratic[t] = t % 2 == 0 ? 1 : 20;
    // seven selling days in ten at a fixed size: ADI 1.43, CV² of daily sales about 0.43
    for (std::size_t t = 0; t < days; ++t) sparse_steady[t] = t % 10 < 7 ? 4 : 0;
    for (std::size_t t = 0; t < days; t += 5) sparse_erratic[t] = (t / 5) % 2 == 0 ? 1 : 30;
    const std::vector<std::pair<std::vector<Count>, DemandClass>> cases = {
        {constant, DemandClass::Smooth},
        {dense_erratic, DemandClass::Erratic},
        {sparse_steady, DemandClass::Intermittent},
        {sparse_erratic, DemandClass::Lumpy}};
    bool ok = true;
    std::string detail;
    for (const auto& [values, want] : cases) {
        const auto p = demand_stats(SalesSeries::make("x", d0, values), days - 1);
        ok = ok && p.demand_class == want;
        detail += fmt("%s(adi %.2f, cv2 %.2f) ", to_string(p.demand_class).c_str(), p.adi, p.cv2);
    }
    // a sparser steady series is Intermittent once CV² is taken over sale sizes only
    std::vector<Count> every_third(days, 0);
    for (std::size_t t = 0; t < days; t += 3) every_third[t] = 5;
    ClassifierOptions sizes_only;
    sizes_only.cv2_nonzero_only = true;
    const auto p3 = demand_stats(SalesSeries::make("x", d0, every_third), days - 1, sizes_only);
    ok = ok && p3.demand_class == DemandClass::Intermittent;
    detail += fmt("| sizes-only CV², sale every 3rd day: %s", to_string(p3.demand_class).c_str());
    return {ok, detail};
}

// 8. End-to-end synthetic benchmark.
Outcome synthetic_benchmark() {
    auto g = synth::poisson_hierarchy(50, 5, 730, 8);
    const auto ds = Dataset::make(std::move(g.lower), g.parent_of, 28, true);
    const auto config = build_config({{"models", "pr"}, {"dist", "poisson"}, {"benchmarks", "naive,drift,insample"},
                                      {"write_forecasts", "false"}, {"output", work_dir("c8").string()}});
    const auto result = run_topdown(config, ds);
    const auto* td = find_row(result.metrics, "all", "poisson/pr", "wspl_L");
    const auto* naive = find_row(result.metrics, "all", "benchmark/naive", "wspl_L");
    const auto* drift = find_row(result.metrics, "all", "benchmark/drift", "wspl_L");
    const auto* ins = find_row(result.metrics, "all", "benchmark/insample", "wspl_L");
    if (!td || !naive || !drift || !ins) return {false, "missing metric rows; failures: " + std::to_string(result.failures.size())};
    return {td->value < naive->value && td->value < drift->value && td->value <= 1.10 * ins->value,
            fmt("WSPL_L top-down %.4f, naive %.4f, drift %.4f, in-sample %.4f (ratio %.3f), %zu series",
                td->value, naive->value, drift->value, ins->value, td->value / ins->value, td->n_series)};
}

// 9. Sampling plateau on a lumpy population.
Outcome sampling_plateau() {
    const auto population = synth::lumpy_population(5000, 730, 9);
    SamplingStudySpec spec;
    spec.sizes = {10, 100, 1000, 2500, 5000};
    spec.repeats = 20;
    const auto res = run_sampling_study(population, 730 - 28 - 1, 28, spec);
    std::map<std::size_t, double> mean;
    for (const auto& r : res.rows) mean[r.size] += r.mse / spec.repeats;
    const double first = mean.begin()->second, last = mean.rbegin()->second;
    const double prev = std::next(mean.rbegin())->second;
    const double plateau = std::abs(last - prev) / prev;
    std::string curve;
    for (const auto& [s, m] : mean) curve += fmt("%zu:%.4f ", s, m);
    return {last <= first && plateau < 0.02,
            fmt("mean MSE %s| last-two gap %.2f%%, zero baseline %.4f, mean baseline %.4f", curve.c_str(),
                100 * plateau, res.rows.front().baseline_zero_mse, res.rows.front().baseline_mean_mse)};
}

// 10. Desk-scale single-store run through the file-based pipeline.
Outcome desk_scale() {
    const auto dir = work_dir("c10");
    {
        auto g = synth::m5_like(3049, 1, 1941, 10);
        std::ofstream lower(dir / "sales.csv");
        write_wide_csv(lower, g.lower);
        std::ofstream h(dir / "hierarchy.csv");
        write_hierarchy_csv(h, g.parent_of);
    }
    const auto start = std::chrono::steady_clock::now();
    const auto config = build_config({{"profile", "m5"},
                                      {"lower", (dir / "sales.csv").string()},
                                      {"hierarchy", (dir / "hierarchy.csv").string()},
                                      {"models", "pr"},
                                      {"dist", "poisson"},
                                      {"output", (dir / "out").string()}});
    const auto ds = load_dataset(config);
    write_bundle(config, "classify", run_classify(config, ds));
    const auto result = run_topdown(config, ds);
    write_bundle(config, "topdown", result);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double rss = peak_rss_mb();
    const auto* row = find_row(result.metrics, "all", "poisson/pr", "wspl_L");
    return {secs < 600 && rss < 8192 && row != nullptr && result.failures.empty(),
            fmt("%zu lower series x %zu days in %.1f s, peak RSS %.0f MB, WSPL_L %.4f", ds.lower().size(), ds.length(),
                secs, rss, row ? row->value : NAN)};
}

// 11. Disjoint-fold ensemble against a single model.
Outcome fold_ensemble() {
    auto g = synth::poisson_hierarchy(50, 5, 730, 8);
    const auto ds = Dataset::make(std::move(g.lower), g.parent_of, 28, true);
    const auto config = build_config({{"models", "pr"}, {"write_forecasts", "false"}, {"ensemble_level", "L"},
                                      {"output", work_dir("c11").string()}});
    const auto single = run_level_training(config, ds, 1);
    const auto ens = run_fold_ensemble(config, ds, 5);
    const auto* a = find_row(single.metrics, "all", "poisson/pr", "wspl_L");
    const auto* b = find_row(ens.metrics, "all", "poisson/pr-ens5", "wspl_L");
    if (!a || !b) return {false, "missing metric rows"};
    std::size_t full = 0, peak = 0;
    for (const auto& cls : single.classes) {
        if (const auto it = cls.design_rows.find("pr"); it != cls.design_rows.end()) full = std::max(full, it->second[0]);
    }
    std::size_t full_class = 0;
    for (const auto& cls : ens.classes) {
        const auto it = cls.design_rows.find("pr-ens5");
        if (it == cls.design_rows.end()) continue;
        const auto sum = std::accumulate(it->second.begin(), it->second.end(), std::size_t{0});
        if (sum > full_class) {
            full_class = sum;
            peak = *std::max_element(it->second.begin(), it->second.end());
        }
    }
    const double change = std::abs(b->value - a->value) / a->value;
    const double ratio = peak > 0 ? static_cast<double>(full) / static_cast<double>(peak) : 0.0;
    return {change < 0.05 && ratio >= 4.0 && ratio <= 6.0 && full == full_class,
            fmt("WSPL_L single %.4f vs 5-fold %.4f (%.2f%% change); design rows per fit %zu -> peak %zu (%.2fx)",
                a->value, b->value, 100 * change, full, peak, ratio)};
}

}  // namespace

int main() {
    const std::vector<std::pair<double, std::function<Outcome()>>> criteria = {
        {5, nb_loss_derivatives}, {120, dispersion_recovery}, {10, normal_equation_parity}, {0, coherence},
        {1, quantile_oracle},     {0, spl_oracle},             {0, demand_archetypes},      {300, synthetic_benchmark},
        {600, sampling_plateau},  {600, desk_scale},           {0, fold_ensemble}};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [limit, run] = criteria[i];
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (limit > 0 && secs >= limit) {
            o.pass = false;
            o.detail += fmt(" [over the %.0f s budget]", limit);
        }
        if (!o.pass) ++failed;
        std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << " (" << fmt("%.2f", secs) << " s) "
                  << o.detail << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
