#pragma once

#include "tdcast/demand.hpp"
#include "tdcast/features.hpp"
#include "tdcast/gbt/booster.hpp"
#include "tdcast/series.hpp"
#include "tdcast/topdown.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tdcast {

enum class Profile { M5, Favorita, Generic };

std::string to_string(Profile p);
Profile parse_profile(std::string_view name);

/// One roster entry: `pr`, `lasso`, or `gbt-<loss>[@default|@preset]` (e.g. `gbt-tweedie:1.3@preset`).
struct ModelSpec {
    enum class Kind { PooledRegression, Lasso, Gbt };

    std::string name;
    Kind kind = Kind::PooledRegression;
    gbt::LossSpec loss;
    std::string gbt_profile = "default";
    /// `gbt-negbin` without a fixed r: dispersion is estimated jointly with the trees.
    bool estimate_dispersion = false;

    static ModelSpec parse(std::string_view text);
};

struct ExperimentConfig {
    // data
    std::string lower_path;
    std::string hierarchy_path;
    std::string format = "long";  // long | wide
    Profile profile = Profile::Generic;
    IngestOptions ingest;
    int horizon = 28;
    bool holdout = true;

    // modelling
    std::string demand_class = "all";
    std::vector<std::string> models = {"pr"};
    std::vector<Distribution> dists = {Distribution::Poisson};
    std::vector<std::string> benchmarks;  // mean, naive, snaive, drift, insample
    std::vector<double> quantiles;        // empty: profile default
    int n_lags = 100;
    PadPolicy pad = PadPolicy::ZeroPad;
    std::uint64_t seed = 42;
    std::size_t variance_window = 0;  // 0: full training span
    bool shared_p = false;
    std::size_t lasso_folds = 10;
    ClassifierOptions classifier;
    int gbt_num_trees = -1;  // -1: profile value

    // sampling study
    std::vector<std::size_t> sample_sizes;
    int repeats = 100;

    // fold ensemble
    int folds = 5;
    Level ensemble_level = Level::Lower;

    // eval / plots
    std::string quantiles_path;
    Level eval_level = Level::Lower;
    std::string eval_model = "external";
    std::string bundle_dir;

    std::string output_dir = "out";
    bool write_forecasts = true;

    [[nodiscard]] std::vector<double> quantile_levels() const;
    [[nodiscard]] std::optional<std::size_t> variance_window_opt() const {
        return variance_window > 0 ? std::optional<std::size_t>(variance_window) : std::nullopt;
    }
    /// Empty when every class is selected.
    [[nodiscard]] std::optional<DemandClass> class_filter() const;
    [[nodiscard]] gbt::GbtParams gbt_params(const std::string& profile) const;
};

struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// `key = value` lines; `#` starts a comment. Unknown keys are rejected.
ConfigEntries parse_config_entries(std::istream& in);
ConfigEntries read_config_file(const std::string& path);

/// Applies profile defaults first, then every entry in order (later entries win).
ExperimentConfig build_config(const ConfigEntries& entries);

/// Sorted `key = value` dump of every key; stable input for the manifest hash.
std::string canonical_config(const ExperimentConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

/// Checks invariants that apply to every data-driven subcommand.
void validate_data_config(const ExperimentConfig& config);

}  // namespace tdcast
