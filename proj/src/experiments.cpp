#include "tdcast/experiments.hpp"

#include "csv.hpp"
#include "format.hpp"
#include "tdcast/errors.hpp"
#include "tdcast/gbt/booster.hpp"
#include "tdcast/linear.hpp"
#include "tdcast/topdown.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

namespace tdcast {

namespace fs = std::filesystem;

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
    out << "group,model,metric,value,n_series,n_omitted\n";
    for (const auto& r : rows) {
        out << r.group << ',' << r.model << ',' << r.metric << ',' << format_double(r.value) << ',' << r.n_series
            << ',' << r.n_omitted << '\n';
    }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
    std::vector<MetricRow> rows;
    std::string line;
    std::size_t line_no = 0;
    if (!csv::next_line(in, line, line_no)) return rows;
    if (csv::trim(line) != "group,model,metric,value,n_series,n_omitted") {
        throw DataError("metrics: unexpected header '" + line + "'");
    }
    while (csv::next_line(in, line, line_no)) {
        const auto f = csv::split(line);
        const auto value = f.size() == 6 ? csv::to_double(f[3]) : std::nullopt;
        const auto n = f.size() == 6 ? csv::to_int(f[4]) : std::nullopt;
        const auto omitted = f.size() == 6 ? csv::to_int(f[5]) : std::nullopt;
        if (!value || !n || !omitted) throw DataError("metrics line " + std::to_string(line_no) + ": malformed row");
        rows.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]), *value,
                        static_cast<std::size_t>(*n), static_cast<std::size_t>(*omitted)});
    }
    return rows;
}

Dataset load_dataset(const ExperimentConfig& config) {
    validate_data_config(config);
    auto lower = config.format == "wide" ? ingest_wide_csv(config.lower_path, config.ingest)
                                         : ingest_long_csv(config.lower_path, config.ingest);
    const auto parent_of = read_hierarchy_csv(config.hierarchy_path);
    return Dataset::make(std::move(lower), parent_of, config.horizon, config.holdout);
}

std::vector<std::size_t> fold_assignment(std::size_t n_series, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("fold count must be >= 1");
    std::vector<std::size_t> order(n_series);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold(n_series);
    for (std::size_t pos = 0; pos < n_series; ++pos) fold[order[pos]] = pos % k;
    return fold;
}

namespace {

std::unique_ptr<PointModel> fit_point_model(std::span<const SalesSeries> series, const ModelSpec& spec,
                                            const ExperimentConfig& config, std::size_t train_end,
                                            std::uint64_t seed, std::size_t& design_rows) {
    switch (spec.kind) {
        case ModelSpec::Kind::PooledRegression: {
            const auto acc = accumulate_series(series, train_end, config.n_lags, config.pad);
            design_rows = acc.n_rows();
            if (acc.n_rows() == 0) throw DataError("no training rows for " + spec.name);
            return std::make_unique<LinearModel>(solve_ols(acc));
        }
        case ModelSpec::Kind::Lasso: {
            const auto folds =
                accumulate_series_folds(series, train_end, config.n_lags, config.pad, config.lasso_folds, seed);
            design_rows = 0;
            for (const auto& f : folds) design_rows += f.n_rows();
            if (design_rows == 0) throw DataError("no training rows for " + spec.name);
            LassoOptions opts;
            opts.cv_folds = config.lasso_folds;
            opts.seed = seed;
            return std::make_unique<LinearModel>(fit_lasso_folds(folds, opts).model);
        }
        case ModelSpec::Kind::Gbt: {
            const auto matrix = embed(series, train_end, config.n_lags, config.pad);
            design_rows = matrix.rows();
            if (matrix.rows() == 0) throw DataError("no training rows for " + spec.name);
            const auto params = config.gbt_params(spec.gbt_profile);
            if (spec.estimate_dispersion) {
                auto fit = gbt::fit_gbt_negbin(matrix, params, seed);
                if (fit.warning) {
                    std::cerr << "warning: " << spec.name << ": dispersion did not converge after " << fit.iterations
                              << " rounds; using the best-likelihood iterate (r = " << fit.r << ")\n";
                }
                return std::make_unique<gbt::GbtModel>(std::move(fit.model));
            }
            return std::make_unique<gbt::GbtModel>(gbt::fit_gbt(matrix, spec.loss, params, seed));
        }
    }
    throw ConfigError("unknown model kind");
}

std::string file_token(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
    }
    return s;
}

double path_mse(std::span<const double> truth, std::span<const double> forecast) {
    double total = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) total += (truth[k] - forecast[k]) * (truth[k] - forecast[k]);
    return total / static_cast<double>(truth.size());
}

/// Everything one class run needs, resolved from the dataset once.
struct ClassContext {
    const ExperimentConfig& config;
    const Dataset& dataset;
    DemandClass demand_class;
    std::vector<std::size_t> aggregates;  // indices into dataset.aggregate()
    std::vector<std::size_t> lowers;      // children of those aggregates, in hierarchy order
    std::vector<double> levels;

    [[nodiscard]] std::size_t train_end() const { return dataset.train_end(); }
    [[nodiscard]] const SalesSeries& series(Level level, std::size_t i) const {
        return level == Level::Aggregate ? dataset.aggregate()[aggregates[i]] : dataset.lower()[lowers[i]];
    }
    [[nodiscard]] std::size_t count(Level level) const {
        return level == Level::Aggregate ? aggregates.size() : lowers.size();
    }
    [[nodiscard]] std::vector<SalesSeries> copy(Level level) const {
        std::vector<SalesSeries> out;
        out.reserve(count(level));
        for (std::size_t i = 0; i < count(level); ++i) out.push_back(series(level, i));
        return out;
    }
};

void write_artifacts(const ClassContext& ctx, const std::string& label, Level level,
                     std::span<const QuantileForecastSet> q, std::span<const DistributionParams> params) {
    if (!ctx.config.write_forecasts || ctx.config.output_dir.empty()) return;
    const auto cls = to_string(ctx.demand_class);
    const auto stem = file_token(label) + "__" + to_string(level) + ".csv";
    const auto qdir = fs::path(ctx.config.output_dir) / "forecasts" / cls;
    fs::create_directories(qdir);
    std::ofstream qout(qdir / stem);
    write_quantiles_csv_header(qout);
    for (const auto& set : q) write_quantiles_csv(qout, set);
    if (params.empty()) return;
    const auto pdir = fs::path(ctx.config.output_dir) / "params" / cls;
    fs::create_directories(pdir);
    std::ofstream pout(pdir / stem);
    write_params_csv_header(pout);
    for (const auto& p : params) write_params_csv(pout, p);
}

void score_quantiles(const ClassContext& ctx, const std::string& label, Level level,
                     std::span<const QuantileForecastSet> q, ClassOutput& out) {
    if (!ctx.dataset.has_holdout()) return;
    auto& scores = out.scores[{label, level}];
    scores.n_series = q.size();
    for (std::size_t i = 0; i < q.size(); ++i) {
        const auto& s = ctx.series(level, i);
        const auto truth = test_values(s, ctx.train_end(), ctx.config.horizon);
        scores.spl.push_back(evaluate_series(truth, q[i], s, ctx.train_end()));
    }
}

void score_points(const ClassContext& ctx, const std::string& label, Level level,
                  std::span<const ForecastPath> paths, ClassOutput& out) {
    if (!ctx.dataset.has_holdout()) return;
    auto& scores = out.scores[{label, level}];
    scores.n_series = paths.size();
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto truth = test_values(ctx.series(level, i), ctx.train_end(), ctx.config.horizon);
        scores.series_mse.push_back(path_mse(truth, paths[i].values));
    }
}

/// Distribution layer for one model: params and quantiles at each level that has point paths.
void distribution_layer(const ClassContext& ctx, const std::string& model_name,
                        const std::vector<ForecastPath>* aggregate_paths, const std::vector<ForecastPath>& lower_paths,
                        ClassOutput& out) {
    const auto window = ctx.config.variance_window_opt();
    const auto T = ctx.train_end();
    for (const auto dist : ctx.config.dists) {
        const auto label = to_string(dist) + "/" + model_name;
        std::vector<DistributionParams> params_a;
        if (aggregate_paths != nullptr) {
            std::vector<QuantileForecastSet> q;
            for (std::size_t j = 0; j < aggregate_paths->size(); ++j) {
                params_a.push_back(estimate_params((*aggregate_paths)[j], ctx.series(Level::Aggregate, j), T, dist, window));
                q.push_back(quantiles(params_a.back(), ctx.levels));
            }
            write_artifacts(ctx, label, Level::Aggregate, q, params_a);
            score_quantiles(ctx, label, Level::Aggregate, q, out);
        }
        std::vector<DistributionParams> params_l;
        std::vector<QuantileForecastSet> q;
        std::map<std::size_t, std::size_t> parent_slot;
        for (std::size_t j = 0; j < ctx.aggregates.size(); ++j) parent_slot[ctx.aggregates[j]] = j;
        for (std::size_t i = 0; i < lower_paths.size(); ++i) {
            const bool share = ctx.config.shared_p && dist == Distribution::NegBin && !params_a.empty();
            if (share) {
                const auto j = parent_slot.at(ctx.dataset.parent(ctx.lowers[i]));
                params_l.push_back(estimate_params_shared_p(lower_paths[i], params_a[j]));
            } else {
                params_l.push_back(estimate_params(lower_paths[i], ctx.series(Level::Lower, i), T, dist, window));
            }
            q.push_back(quantiles(params_l.back(), ctx.levels));
        }
        write_artifacts(ctx, label, Level::Lower, q, params_l);
        score_quantiles(ctx, label, Level::Lower, q, out);
    }
}

void run_benchmarks(const ClassContext& ctx, ClassOutput& out) {
    const auto T = ctx.train_end();
    const int h = ctx.config.horizon;
    for (const auto& name : ctx.config.benchmarks) {
        const auto label = "benchmark/" + name;
        for (const auto level : {Level::Aggregate, Level::Lower}) {
            std::vector<QuantileForecastSet> q;
            std::vector<ForecastPath> points;
            for (std::size_t i = 0; i < ctx.count(level); ++i) {
                const auto& s = ctx.series(level, i);
                if (name == "insample") {
                    q.push_back(in_sample_quantiles(s, T, ctx.levels, h));
                } else {
                    auto [path, set] = baseline_forecast(parse_baseline(name), s, T, h, ctx.levels);
                    points.push_back(std::move(path));
                    q.push_back(std::move(set));
                }
            }
            write_artifacts(ctx, label, level, q, {});
            score_quantiles(ctx, label, level, q, out);
            if (!points.empty()) score_points(ctx, label, level, points, out);
        }
    }
}

/// Child paths for every aggregate path, reordered to ctx.lowers.
std::vector<ForecastPath> split_paths(const ClassContext& ctx, const std::vector<ForecastPath>& aggregate_paths,
                                      const ProportionMap& rho) {
    std::vector<ForecastPath> lower;
    lower.reserve(ctx.lowers.size());
    for (const auto& path : aggregate_paths) {
        for (auto& child : disaggregate(path, rho, ctx.dataset.hierarchy())) lower.push_back(std::move(child));
    }
    for (std::size_t i = 0; i < lower.size(); ++i) {
        if (lower[i].series_id != ctx.series(Level::Lower, i).id) throw DataError("child order mismatch");
    }
    return lower;
}

enum class Mode { TopDown, LevelTraining, Direct };

void run_class(const ClassContext& ctx, Mode mode, std::size_t folds, const ProportionMap& rho, ClassOutput& out) {
    const auto T = ctx.train_end();
    for (std::size_t j = 0; j < ctx.aggregates.size(); ++j) out.aggregate_ids.push_back(ctx.series(Level::Aggregate, j).id);
    for (std::size_t i = 0; i < ctx.lowers.size(); ++i) out.lower_ids.push_back(ctx.series(Level::Lower, i).id);

    if (mode == Mode::Direct) {
        const auto train = ctx.copy(Level::Lower);
        const auto models = fit_direct_quantile_gbt(train, T, ctx.config.n_lags, ctx.levels, ctx.config.horizon,
                                                    ctx.config.gbt_params("default"), ctx.config.seed, ctx.config.pad);
        std::vector<QuantileForecastSet> q;
        for (const auto& s : train) q.push_back(models.predict(s, T));
        const std::string label = "benchmark/direct-gbt";
        write_artifacts(ctx, label, Level::Lower, q, {});
        score_quantiles(ctx, label, Level::Lower, q, out);
        return;
    }

    const Level train_level = mode == Mode::TopDown ? Level::Aggregate : ctx.config.ensemble_level;
    const auto train = ctx.copy(train_level);
    for (const auto& name : ctx.config.models) {
        const auto spec = ModelSpec::parse(name);
        const auto model_name = folds > 1 ? name + "-ens" + std::to_string(folds) : name;
        auto fit = fit_and_forecast(train, train, spec, ctx.config, T, folds);
        out.design_rows[model_name] = fit.design_rows;
        if (train_level == Level::Aggregate) {
            auto lower = split_paths(ctx, fit.paths, rho);
            score_points(ctx, model_name, Level::Aggregate, fit.paths, out);
            score_points(ctx, model_name, Level::Lower, lower, out);
            distribution_layer(ctx, model_name, &fit.paths, lower, out);
            out.aggregate_paths[model_name] = std::move(fit.paths);
            out.lower_paths[model_name] = std::move(lower);
        } else {
            score_points(ctx, model_name, Level::Lower, fit.paths, out);
            distribution_layer(ctx, model_name, nullptr, fit.paths, out);
            out.lower_paths[model_name] = std::move(fit.paths);
        }
    }
    if (mode == Mode::TopDown) run_benchmarks(ctx, out);
}

void append_rows(const std::string& group, const std::map<std::pair<std::string, Level>, LevelScores>& scores,
                 std::vector<MetricRow>& rows) {
    for (const auto& [key, s] : scores) {
        const auto& [label, level] = key;
        const auto suffix = "_" + to_string(level);
        if (!s.spl.empty()) {
            const auto report = make_report(s.spl);
            if (report.n_valid > 0) {
                rows.push_back({group, label, "wspl" + suffix, report.wspl, report.n_valid, report.n_omitted});
            }
        }
        if (!s.series_mse.empty()) {
            const double total = std::accumulate(s.series_mse.begin(), s.series_mse.end(), 0.0);
            rows.push_back({group, label, "mse" + suffix, total / static_cast<double>(s.series_mse.size()),
                            s.series_mse.size(), 0});
        }
    }
}

std::vector<DemandClass> selected_classes(const ExperimentConfig& config) {
    if (const auto c = config.class_filter()) return {*c};
    return {std::begin(kAllDemandClasses), std::end(kAllDemandClasses)};
}

RunResult run_classes(const ExperimentConfig& config, const Dataset& dataset, Mode mode, std::size_t folds) {
    RunResult result;
    result.partition = partition_by_class(dataset, Level::Aggregate, config.classifier);
    const auto rho = compute_proportions(dataset);
    const auto classes = selected_classes(config);

    std::vector<ClassOutput> outputs(classes.size());
    std::vector<std::string> errors(classes.size());
    std::vector<int> codes(classes.size(), 0);
    tbb::parallel_for(std::size_t{0}, classes.size(), [&](std::size_t c) {
        ClassContext ctx{config, dataset, classes[c], {}, {}, config.quantile_levels()};
        for (const auto& id : result.partition.groups.at(classes[c])) {
            const auto j = dataset.aggregate_index(id);
            ctx.aggregates.push_back(j);
            for (auto i : dataset.children(j)) ctx.lowers.push_back(i);
        }
        outputs[c].demand_class = classes[c];
        if (ctx.aggregates.empty()) return;
        auto fail = [&](const std::exception& e, int code) {
            errors[c] = e.what();
            codes[c] = code;
            outputs[c] = ClassOutput{};
            outputs[c].demand_class = classes[c];
        };
        try {
            run_class(ctx, mode, folds, rho, outputs[c]);
        } catch (const ConfigError& e) {
            fail(e, 1);
        } catch (const DataError& e) {
            fail(e, 2);
        } catch (const std::exception& e) {
            fail(e, 3);
        }
    });

    std::map<std::pair<std::string, Level>, LevelScores> pooled;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto name = to_string(classes[c]);
        if (!errors[c].empty()) {
            result.failures.push_back(name + ": " + errors[c]);
            result.failure_code = std::max(result.failure_code, codes[c]);
            continue;
        }
        append_rows(name, outputs[c].scores, result.metrics);
        for (const auto& [key, s] : outputs[c].scores) {
            auto& p = pooled[key];
            p.spl.insert(p.spl.end(), s.spl.begin(), s.spl.end());
            p.series_mse.insert(p.series_mse.end(), s.series_mse.begin(), s.series_mse.end());
            p.n_series += s.n_series;
        }
    }
    if (classes.size() > 1) append_rows("all", pooled, result.metrics);
    result.classes = std::move(outputs);
    return result;
}

}  // namespace

FitOutcome fit_and_forecast(std::span<const SalesSeries> train, std::span<const SalesSeries> targets,
                            const ModelSpec& model, const ExperimentConfig& config, std::size_t train_end,
                            std::size_t folds) {
    if (folds == 0) throw ConfigError("fold count must be >= 1");
    if (train.size() < folds) {
        throw ConfigError("need at least " + std::to_string(folds) + " training series, got " +
                          std::to_string(train.size()));
    }
    FitOutcome outcome;
    outcome.design_rows.assign(folds, 0);
    std::vector<std::vector<ForecastPath>> per_fold(folds);
    const auto assign = folds > 1 ? fold_assignment(train.size(), folds, config.seed) : std::vector<std::size_t>{};

    tbb::parallel_for(std::size_t{0}, folds, [&](std::size_t f) {
        std::unique_ptr<PointModel> fitted;
        const auto fold_seed = config.seed + f;
        if (folds == 1) {
            fitted = fit_point_model(train, model, config, train_end, fold_seed, outcome.design_rows[f]);
        } else {
            std::vector<SalesSeries> subset;
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (assign[i] == f) subset.push_back(train[i]);
            }
            fitted = fit_point_model(subset, model, config, train_end, fold_seed, outcome.design_rows[f]);
        }
        per_fold[f].reserve(targets.size());
        for (const auto& s : targets) per_fold[f].push_back(recursive_forecast(*fitted, s, train_end, config.horizon));
    });

    outcome.paths.reserve(targets.size());
    std::vector<ForecastPath> members(folds);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (std::size_t f = 0; f < folds; ++f) members[f] = std::move(per_fold[f][i]);
        outcome.paths.push_back(folds == 1 ? std::move(members[0]) : average_paths(members));
    }
    return outcome;
}

RunResult run_topdown(const ExperimentConfig& config, const Dataset& dataset) {
    return run_classes(config, dataset, Mode::TopDown, 1);
}

RunResult run_level_training(const ExperimentConfig& config, const Dataset& dataset, std::size_t folds) {
    return run_classes(config, dataset, Mode::LevelTraining, folds);
}

RunResult run_fold_ensemble(const ExperimentConfig& config, const Dataset& dataset, std::size_t k) {
    if (k <= 1) throw ConfigError("fold ensemble needs k >= 2, got " + std::to_string(k));
    return run_level_training(config, dataset, k);
}

RunResult run_direct(const ExperimentConfig& config, const Dataset& dataset) {
    return run_classes(config, dataset, Mode::Direct, 1);
}

RunResult run_eval(const ExperimentConfig& config, const Dataset& dataset,
                   const std::map<std::string, QuantileForecastSet>& forecasts) {
    if (!dataset.has_holdout()) throw ConfigError("eval needs a hold-out (holdout = true)");
    RunResult result;
    result.partition = partition_by_class(dataset, Level::Aggregate, config.classifier);
    const auto level = config.eval_level;
    const auto T = dataset.train_end();

    std::map<DemandClass, std::vector<SeriesSpl>> by_class;
    std::vector<SeriesSpl> all;
    for (const auto& [id, set] : forecasts) {
        const auto& series = level == Level::Aggregate ? dataset.aggregate()[dataset.aggregate_index(id)]
                                                       : dataset.lower()[dataset.lower_index(id)];
        if (static_cast<int>(set.horizon()) != config.horizon) {
            throw DataError("forecast for '" + id + "' has " + std::to_string(set.horizon()) + " steps, expected " +
                            std::to_string(config.horizon));
        }
        const auto& agg_id = level == Level::Aggregate ? id : dataset.hierarchy().parent_of.at(id);
        const auto truth = test_values(series, T, config.horizon);
        auto scored = evaluate_series(truth, set, series, T);
        all.push_back(scored);
        if (const auto it = result.partition.profiles.find(agg_id); it != result.partition.profiles.end()) {
            by_class[it->second.demand_class].push_back(std::move(scored));
        }
    }
    const auto metric = "wspl_" + to_string(level);
    for (const auto& [cls, spls] : by_class) {
        const auto report = make_report(spls);
        if (report.n_valid > 0) {
            result.metrics.push_back({to_string(cls), config.eval_model, metric, report.wspl, report.n_valid, report.n_omitted});
        }
    }
    if (!all.empty()) {
        const auto report = make_report(all);
        if (report.n_valid > 0) {
            result.metrics.push_back({"all", config.eval_model, metric, report.wspl, report.n_valid, report.n_omitted});
        }
    }
    return result;
}

RunResult run_classify(const ExperimentConfig& config, const Dataset& dataset) {
    RunResult result;
    result.partition = partition_by_class(dataset, Level::Aggregate, config.classifier);
    const auto lower = partition_by_class(dataset, Level::Lower, config.classifier);
    auto add = [&](const ClassPartition& p, std::size_t total) {
        for (const auto cls : kAllDemandClasses) {
            const auto n = p.groups.at(cls).size();
            const double share = total > 0 ? static_cast<double>(n) / static_cast<double>(total) : 0.0;
            result.metrics.push_back({to_string(cls), "classifier", "share_" + to_string(p.level), share, n,
                                      p.excluded.size()});
        }
    };
    add(result.partition, dataset.aggregate().size());
    add(lower, dataset.lower().size());
    result.lower_partition = lower;
    return result;
}

SamplingResult run_sampling_study(std::span<const SalesSeries> population, std::size_t train_end, int horizon,
                                  const SamplingStudySpec& spec) {
    const std::size_t n = population.size();
    if (spec.sizes.empty()) throw ConfigError("sampling study needs at least one sample size");
    if (spec.repeats < 1) throw ConfigError("repeats must be >= 1");
    for (const auto s : spec.sizes) {
        if (s < 1 || s > n) {
            throw ConfigError("sample size " + std::to_string(s) + " outside [1, " + std::to_string(n) + "]");
        }
    }
    std::vector<std::vector<double>> truth(n);
    std::vector<std::vector<double>> mean_paths(n);
    std::vector<std::vector<double>> zero_paths(n, std::vector<double>(static_cast<std::size_t>(horizon), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        truth[i] = test_values(population[i], train_end, horizon);
        const auto train = training_values(population[i], train_end);
        const double m = std::accumulate(train.begin(), train.end(), 0.0) / static_cast<double>(train.size());
        mean_paths[i].assign(static_cast<std::size_t>(horizon), m);
    }
    const double mean_mse = mse(truth, mean_paths);
    const double zero_mse = mse(truth, zero_paths);

    const auto p1 = static_cast<std::size_t>(spec.n_lags) + 1;
    const bool cache = n * (p1 * p1 + p1) * sizeof(double) <= spec.memory_budget_bytes;
    std::vector<NormalAccumulator> per_series;
    if (cache) {
        per_series.resize(n);
        tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) {
            per_series[i] = accumulate_series(population.subspan(i, 1), train_end, spec.n_lags, spec.pad);
        });
    }

    const auto repeats = static_cast<std::size_t>(spec.repeats);
    SamplingResult result;
    result.population = n;
    result.rows.resize(spec.sizes.size() * repeats);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});

    tbb::parallel_for(std::size_t{0}, result.rows.size(), [&](std::size_t slot) {
        const auto si = slot / repeats;
        const auto r = slot % repeats;
        const auto s = spec.sizes[si];
        std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                          static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        std::vector<std::size_t> pick;
        pick.reserve(s);
        std::sample(all.begin(), all.end(), std::back_inserter(pick), s, rng);

        NormalAccumulator acc(static_cast<std::size_t>(spec.n_lags));
        if (cache) {
            for (auto i : pick) acc.merge(per_series[i]);
        } else {
            std::vector<SalesSeries> subset;
            subset.reserve(s);
            for (auto i : pick) subset.push_back(population[i]);
            acc = accumulate_series(subset, train_end, spec.n_lags, spec.pad);
        }
        const auto model = solve_ols(acc);
        std::vector<std::vector<double>> forecasts(n);
        for (std::size_t i = 0; i < n; ++i) forecasts[i] = recursive_forecast(model, population[i], train_end, horizon).values;
        result.rows[slot] = {s, static_cast<int>(r), mse(truth, forecasts), mean_mse, zero_mse};
    });
    return result;
}

SamplingResult run_sampling_study(const ExperimentConfig& config, const Dataset& dataset) {
    if (!dataset.has_holdout()) throw ConfigError("the sampling study needs a hold-out (holdout = true)");
    const auto partition = partition_by_class(dataset, Level::Lower, config.classifier);
    std::vector<std::string> ids;
    if (const auto c = config.class_filter()) {
        ids = partition.groups.at(*c);
    } else {
        for (const auto& [cls, group] : partition.groups) ids.insert(ids.end(), group.begin(), group.end());
        std::sort(ids.begin(), ids.end());
    }
    std::vector<SalesSeries> population;
    population.reserve(ids.size());
    for (const auto& id : ids) population.push_back(dataset.lower()[dataset.lower_index(id)]);
    if (population.empty()) throw DataError("sampling study: the selected class has no series");

    SamplingStudySpec spec;
    spec.sizes = config.sample_sizes;
    if (spec.sizes.empty()) spec.sizes = {population.size()};
    spec.repeats = config.repeats;
    spec.n_lags = config.n_lags;
    spec.pad = config.pad;
    spec.seed = config.seed;
    return run_sampling_study(population, dataset.train_end(), config.horizon, spec);
}

void write_sampling_curve(std::ostream& out, const SamplingResult& result) {
    out << "size,repeat,mse,baseline_mean_mse,baseline_zero_mse\n";
    for (const auto& r : result.rows) {
        out << r.size << ',' << r.repeat << ',' << format_double(r.mse) << ',' << format_double(r.baseline_mean_mse)
            << ',' << format_double(r.baseline_zero_mse) << '\n';
    }
}

SamplingResult read_sampling_curve(std::istream& in) {
    SamplingResult result;
    std::string line;
    std::size_t line_no = 0;
    if (!csv::next_line(in, line, line_no)) return result;
    if (csv::trim(line) != "size,repeat,mse,baseline_mean_mse,baseline_zero_mse") {
        throw DataError("sampling curve: unexpected header '" + line + "'");
    }
    while (csv::next_line(in, line, line_no)) {
        const auto f = csv::split(line);
        if (f.size() != 5) throw DataError("sampling curve line " + std::to_string(line_no) + ": expected 5 fields");
        const auto size = csv::to_int(f[0]);
        const auto repeat = csv::to_int(f[1]);
        const auto a = csv::to_double(f[2]);
        const auto b = csv::to_double(f[3]);
        const auto c = csv::to_double(f[4]);
        if (!size || !repeat || !a || !b || !c) {
            throw DataError("sampling curve line " + std::to_string(line_no) + ": malformed row");
        }
        result.rows.push_back({static_cast<std::size_t>(*size), static_cast<int>(*repeat), *a, *b, *c});
    }
    return result;
}

void write_leaderboard(std::ostream& out, std::span<const MetricRow> metrics) {
    struct Entry {
        std::string group, level, model;
        double wspl;
        std::size_t n_series, n_omitted;
    };
    std::vector<Entry> entries;
    for (const auto& m : metrics) {
        if (m.metric.rfind("wspl_", 0) != 0) continue;
        entries.push_back({m.group, m.metric.substr(5), m.model, m.value, m.n_series, m.n_omitted});
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.group, a.level, a.wspl, a.model) < std::tie(b.group, b.level, b.wspl, b.model);
    });
    out << "group,level,model,wspl,n_series,n_omitted\n";
    for (const auto& e : entries) {
        out << e.group << ',' << e.level << ',' << e.model << ',' << format_double(e.wspl) << ',' << e.n_series << ','
            << e.n_omitted << '\n';
    }
}

void emit_plot_data(const std::string& bundle_dir, const std::string& output_dir) {
    const fs::path bundle(bundle_dir);
    if (!fs::is_directory(bundle)) throw ConfigError("bundle directory '" + bundle_dir + "' does not exist");
    fs::create_directories(output_dir);
    if (const auto metrics = bundle / "metrics.csv"; fs::exists(metrics)) {
        std::ifstream in(metrics);
        const auto rows = read_metrics_csv(in);
        std::ofstream out(fs::path(output_dir) / "leaderboard.csv");
        write_leaderboard(out, rows);
    }
    if (const auto curve = bundle / "sampling_curve.csv"; fs::exists(curve)) {
        std::ifstream in(curve);
        const auto result = read_sampling_curve(in);
        const auto target = fs::path(output_dir) / "sampling_curve.csv";
        if (fs::exists(target) && fs::equivalent(target, curve)) return;
        std::ofstream out(target);
        write_sampling_curve(out, result);
    }
}

std::string manifest_text(const ExperimentConfig& config, const std::string& command) {
    const auto canonical = canonical_config(config);
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
    std::ostringstream os;
    os << "tool = tdcast\n"
       << "version = " << kVersion << '\n'
       << "eigen = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n'
       << "command = " << command << '\n'
       << "seed = " << config.seed << '\n'
       << "config_hash = " << hash << '\n'
       << "[config]\n"
       << canonical;
    return os.str();
}

void write_bundle(const ExperimentConfig& config, const std::string& command, const RunResult& result) {
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "metrics.csv");
        write_metrics_csv(out, result.metrics);
    }
    {
        std::ofstream out(dir / "leaderboard.csv");
        write_leaderboard(out, result.metrics);
    }
    {
        std::ofstream out(dir / "failures.txt");
        for (const auto& f : result.failures) out << f << '\n';
    }
    if (!result.partition.profiles.empty()) {
        std::ofstream out(dir / "demand_classes.csv");
        write_demand_classes_csv(out, result.partition);
        if (result.lower_partition) {
            std::ostringstream rows;
            write_demand_classes_csv(rows, *result.lower_partition);
            const auto text = rows.str();
            out << text.substr(text.find('\n') + 1);
        }
    }
    std::ofstream out(dir / "manifest.txt");
    out << manifest_text(config, command);
}

}  // namespace tdcast
