#include "tdcast/config.hpp"
#include "tdcast/errors.hpp"
#include "tdcast/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

namespace {

using namespace tdcast;

void print_metrics(const RunResult& result) {
    for (const auto& m : result.metrics) {
        std::cout << m.group << '\t' << m.model << '\t' << m.metric << '\t' << m.value << "\t(n=" << m.n_series;
        if (m.n_omitted > 0) std::cout << ", omitted " << m.n_omitted;
        std::cout << ")\n";
    }
    for (const auto& f : result.failures) std::cerr << "class run failed: " << f << '\n';
}

/// Nonzero when every class run failed.
int finish(const ExperimentConfig& config, const std::string& command, const RunResult& result) {
    write_bundle(config, command, result);
    print_metrics(result);
    std::cout << "results written to " << config.output_dir << '\n';
    return result.metrics.empty() && !result.failures.empty() ? result.failure_code : 0;
}

int run_command(const std::string& command, const ExperimentConfig& config) {
    if (command == "emit-plots") {
        const auto bundle = config.bundle_dir.empty() ? config.output_dir : config.bundle_dir;
        emit_plot_data(bundle, config.output_dir);
        std::cout << "plot data written to " << config.output_dir << '\n';
        return 0;
    }
    const auto dataset = load_dataset(config);
    std::cerr << "loaded " << dataset.lower().size() << " lower and " << dataset.aggregate().size()
              << " aggregate series, " << dataset.length() << " days\n";
    if (command == "classify") return finish(config, command, run_classify(config, dataset));
    if (command == "topdown") return finish(config, command, run_topdown(config, dataset));
    if (command == "direct") return finish(config, command, run_direct(config, dataset));
    if (command == "ensemble") {
        return finish(config, command, run_fold_ensemble(config, dataset, static_cast<std::size_t>(std::max(config.folds, 0))));
    }
    if (command == "eval") {
        if (config.quantiles_path.empty()) throw ConfigError("eval needs --quantiles_file");
        std::ifstream in(config.quantiles_path);
        if (!in) throw ConfigError("cannot open '" + config.quantiles_path + "'");
        return finish(config, command, run_eval(config, dataset, read_quantiles_csv(in)));
    }
    if (command == "sample-study") {
        const auto curve = run_sampling_study(config, dataset);
        RunResult result;
        std::map<std::size_t, std::pair<double, std::size_t>> by_size;
        for (const auto& r : curve.rows) {
            by_size[r.size].first += r.mse;
            ++by_size[r.size].second;
        }
        for (const auto& [size, acc] : by_size) {
            result.metrics.push_back({config.demand_class, "pr", "mse@" + std::to_string(size),
                                      acc.first / static_cast<double>(acc.second), curve.population, 0});
        }
        if (!curve.rows.empty()) {
            result.metrics.push_back({config.demand_class, "mean", "mse", curve.rows.front().baseline_mean_mse,
                                      curve.population, 0});
            result.metrics.push_back({config.demand_class, "zero", "mse", curve.rows.front().baseline_zero_mse,
                                      curve.population, 0});
        }
        std::filesystem::create_directories(config.output_dir);
        std::ofstream out(std::filesystem::path(config.output_dir) / "sampling_curve.csv");
        write_sampling_curve(out, curve);
        return finish(config, command, result);
    }
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tdcast: top-down probabilistic forecasting for intermittent sales"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key = value configuration file");

    const auto& keys = tdcast::config_keys();
    std::map<std::string, std::string> flag_values;
    std::map<std::string, CLI::Option*> flag_options;
    for (const auto& key : keys) {
        flag_options[key.name] = app.add_option("--" + key.name, flag_values[key.name], key.help);
    }

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"classify", "classify series at both levels by ADI and CV²"},
        {"topdown", "train at the aggregate level, disaggregate, and emit quantile forecasts"},
        {"direct", "direct multi-horizon quantile GBT benchmark at the lower level"},
        {"sample-study", "MSE versus training sample size for pooled regression"},
        {"ensemble", "disjoint-fold model ensemble"},
        {"eval", "score a quantile forecast file against the hold-out"},
        {"emit-plots", "write plot-ready CSVs from a result directory"},
    };
    std::string chosen;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->fallthrough();
        sub->callback([&chosen, n = name] { chosen = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        tdcast::ConfigEntries entries;
        if (!config_path.empty()) entries = tdcast::read_config_file(config_path);
        for (const auto& key : keys) {
            if (flag_options[key.name]->count() > 0) entries.emplace_back(key.name, flag_values[key.name]);
        }
        const auto config = tdcast::build_config(entries);
        return run_command(chosen, config);
    } catch (const tdcast::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const tdcast::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const tdcast::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    }
}
