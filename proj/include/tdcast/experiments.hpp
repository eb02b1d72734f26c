#pragma once

#include "tdcast/config.hpp"
#include "tdcast/demand.hpp"
#include "tdcast/eval.hpp"
#include "tdcast/features.hpp"
#include "tdcast/series.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tdcast {

inline constexpr const char* kVersion = "0.1.0";

/// One line of metrics.csv: `group,model,metric,value,n_series,n_omitted`.
struct MetricRow {
    std::string group;
    std::string model;
    std::string metric;
    double value = 0.0;
    std::size_t n_series = 0;
    std::size_t n_omitted = 0;

    [[nodiscard]] bool operator==(const MetricRow&) const = default;
};

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(std::istream& in);

Dataset load_dataset(const ExperimentConfig& config);

/// Series position -> fold, disjoint and exhaustive; fold sizes differ by at most one.
std::vector<std::size_t> fold_assignment(std::size_t n_series, std::size_t k, std::uint64_t seed);

struct FitOutcome {
    std::vector<ForecastPath> paths;       // one per target, averaged over folds
    std::vector<std::size_t> design_rows;  // training rows seen by each fit
};

/**
 * Fits one global model per fold of `train` (folds = 1: a single model on all
 * of it), forecasts every target recursively with each, and averages the paths.
 */
FitOutcome fit_and_forecast(std::span<const SalesSeries> train, std::span<const SalesSeries> targets,
                            const ModelSpec& model, const ExperimentConfig& config, std::size_t train_end,
                            std::size_t folds);

/// Per-series scores of one forecast label at one level.
struct LevelScores {
    std::vector<SeriesSpl> spl;
    std::vector<double> series_mse;  // empty for quantile-only benchmarks
    std::size_t n_series = 0;
};

struct ClassOutput {
    DemandClass demand_class = DemandClass::Smooth;
    std::vector<std::string> aggregate_ids;
    std::vector<std::string> lower_ids;
    /// Point paths by model name.
    std::map<std::string, std::vector<ForecastPath>> aggregate_paths;
    std::map<std::string, std::vector<ForecastPath>> lower_paths;
    std::map<std::string, std::vector<std::size_t>> design_rows;
    /// Keyed by (label, level).
    std::map<std::pair<std::string, Level>, LevelScores> scores;
};

struct RunResult {
    ClassPartition partition;  // level A
    std::optional<ClassPartition> lower_partition;
    std::vector<ClassOutput> classes;
    std::vector<MetricRow> metrics;
    std::vector<std::string> failures;  // "<class>: <message>"
    /// Largest exit code among failed class runs (1 config, 2 data, 3 numerical); 0 when none failed.
    int failure_code = 0;
};

/**
 * Per selected level-A class: global model at A, recursive forecasts,
 * top-down split, distribution parameters at both levels, quantiles, and
 * WSPL/MSE on the hold-out. A failing class is recorded and skipped.
 */
RunResult run_topdown(const ExperimentConfig& config, const Dataset& dataset);

/// As run_topdown but each model is a k-fold ensemble trained at config.ensemble_level.
RunResult run_level_training(const ExperimentConfig& config, const Dataset& dataset, std::size_t folds);

/// k-fold disjoint ensemble; k <= 1 is a ConfigError.
RunResult run_fold_ensemble(const ExperimentConfig& config, const Dataset& dataset, std::size_t k);

/// Direct quantile GBT benchmark at level L, grouped by level-A class.
RunResult run_direct(const ExperimentConfig& config, const Dataset& dataset);

/// Scores an external quantile file at config.eval_level, grouped by level-A class.
RunResult run_eval(const ExperimentConfig& config, const Dataset& dataset,
                   const std::map<std::string, QuantileForecastSet>& forecasts);

/// Level-A and level-L classification.
RunResult run_classify(const ExperimentConfig& config, const Dataset& dataset);

struct SamplingStudySpec {
    std::vector<std::size_t> sizes;
    int repeats = 100;
    int n_lags = 100;
    PadPolicy pad = PadPolicy::ZeroPad;
    std::uint64_t seed = 42;
    /// Per-series normal equations are cached when they fit in this budget; otherwise rows are streamed per fit.
    std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

struct SamplingRow {
    std::size_t size = 0;
    int repeat = 0;
    double mse = 0.0;
    double baseline_mean_mse = 0.0;
    double baseline_zero_mse = 0.0;
};

struct SamplingResult {
    std::vector<SamplingRow> rows;  // ordered by (size, repeat)
    std::size_t population = 0;
};

/**
 * For each size and repeat: draws series uniformly without replacement,
 * fits pooled OLS on them, and records the MSE over the whole population
 * next to the training-mean and all-zero forecasts.
 */
SamplingResult run_sampling_study(std::span<const SalesSeries> population, std::size_t train_end, int horizon,
                                  const SamplingStudySpec& spec);

/// Population: lower-level series whose own class matches config.demand_class.
SamplingResult run_sampling_study(const ExperimentConfig& config, const Dataset& dataset);

/// `size,repeat,mse,baseline_mean_mse,baseline_zero_mse`
void write_sampling_curve(std::ostream& out, const SamplingResult& result);
SamplingResult read_sampling_curve(std::istream& in);

/// `group,level,model,wspl,n_series,n_omitted` sorted by group, level, then ascending WSPL.
void write_leaderboard(std::ostream& out, std::span<const MetricRow> metrics);

/// Writes plot-ready CSVs for whatever the bundle directory contains.
void emit_plot_data(const std::string& bundle_dir, const std::string& output_dir);

/// metrics.csv, leaderboard.csv, failures.txt and manifest.txt under config.output_dir.
void write_bundle(const ExperimentConfig& config, const std::string& command, const RunResult& result);

std::string manifest_text(const ExperimentConfig& config, const std::string& command);

}  // namespace tdcast
