#include "tdcast/config.hpp"

#include "csv.hpp"
#include "format.hpp"
#include "tdcast/errors.hpp"
#include "tdcast/eval.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tdcast {

std::string to_string(Profile p) {
    switch (p) {
        case Profile::M5: return "m5";
        case Profile::Favorita: return "favorita";
        case Profile::Generic: return "generic";
    }
    return "generic";
}

Profile parse_profile(std::string_view name) {
    if (name == "m5") return Profile::M5;
    if (name == "favorita") return Profile::Favorita;
    if (name == "generic") return Profile::Generic;
    throw ConfigError("unknown profile '" + std::string(name) + "'");
}

ModelSpec ModelSpec::parse(std::string_view text) {
    ModelSpec m;
    m.name = std::string(text);
    if (text == "pr") {
        m.kind = Kind::PooledRegression;
        return m;
    }
    if (text == "lasso") {
        m.kind = Kind::Lasso;
        return m;
    }
    if (text.substr(0, 4) != "gbt-") throw ConfigError("unknown model '" + m.name + "'");
    m.kind = Kind::Gbt;
    auto body = text.substr(4);
    if (const auto at = body.find('@'); at != std::string_view::npos) {
        m.gbt_profile = std::string(body.substr(at + 1));
        body = body.substr(0, at);
        (void)gbt::GbtParams::profile(m.gbt_profile);
    }
    m.loss = gbt::parse_loss(body);
    m.estimate_dispersion = body == "negbin";
    return m;
}

std::vector<double> ExperimentConfig::quantile_levels() const {
    if (!quantiles.empty()) return quantiles;
    return profile == Profile::M5 ? m5_quantile_levels() : retail_quantile_levels();
}

std::optional<DemandClass> ExperimentConfig::class_filter() const {
    if (demand_class == "all") return std::nullopt;
    return parse_demand_class(demand_class);
}

gbt::GbtParams ExperimentConfig::gbt_params(const std::string& profile_name) const {
    auto p = gbt::GbtParams::profile(profile_name);
    if (gbt_num_trees >= 0) p.num_trees = gbt_num_trees;
    return p;
}

namespace {

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> out;
    for (auto part : csv::split(text)) {
        if (!part.empty()) out.emplace_back(part);
    }
    return out;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

long long parse_int(std::string_view key, std::string_view v) {
    const auto x = csv::to_int(csv::trim(v));
    if (!x) throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
    return *x;
}

double parse_real(std::string_view key, std::string_view v) {
    const auto x = csv::to_double(csv::trim(v));
    if (!x) throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
    return *x;
}

std::size_t parse_count(std::string_view key, std::string_view v) {
    const auto x = parse_int(key, v);
    if (x < 0) throw ConfigError(std::string(key) + ": must be >= 0");
    return static_cast<std::size_t>(x);
}

std::vector<ConfigKey> make_keys() {
    std::vector<ConfigKey> k;
    auto str = [&](std::string name, std::string help, std::string ExperimentConfig::*field) {
        k.push_back({std::move(name), std::move(help),
                     [field](ExperimentConfig& c, std::string_view v) { c.*field = std::string(v); },
                     [field](const ExperimentConfig& c) { return c.*field; }});
    };
    auto boolean = [&](std::string name, std::string help, auto getter_setter) {
        k.push_back({name, std::move(help),
                     [name, getter_setter](ExperimentConfig& c, std::string_view v) { getter_setter(c) = parse_bool(name, v); },
                     [getter_setter](const ExperimentConfig& c) {
                         return std::string(getter_setter(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
                     }});
    };

    str("lower", "lower-level sales file (long or wide format)", &ExperimentConfig::lower_path);
    str("hierarchy", "hierarchy file with lower_id,aggregate_id", &ExperimentConfig::hierarchy_path);
    k.push_back({"format", "input layout: long | wide",
                 [](ExperimentConfig& c, std::string_view v) {
                     if (v != "long" && v != "wide") throw ConfigError("format must be long or wide");
                     c.format = std::string(v);
                 },
                 [](const ExperimentConfig& c) { return c.format; }});
    k.push_back({"profile", "dataset profile: m5 | favorita | generic",
                 [](ExperimentConfig& c, std::string_view v) { c.profile = parse_profile(v); },
                 [](const ExperimentConfig& c) { return to_string(c.profile); }});
    boolean("clamp_negatives", "set negative quantities to zero", [](ExperimentConfig& c) -> bool& { return c.ingest.clamp_negatives; });
    boolean("round_fractional", "round fractional quantities", [](ExperimentConfig& c) -> bool& { return c.ingest.round_fractional; });
    k.push_back({"gap_policy", "missing calendar days: zero | error",
                 [](ExperimentConfig& c, std::string_view v) {
                     if (v == "zero") {
                         c.ingest.gaps = GapPolicy::Zero;
                     } else if (v == "error") {
                         c.ingest.gaps = GapPolicy::Error;
                     } else {
                         throw ConfigError("gap_policy must be zero or error");
                     }
                 },
                 [](const ExperimentConfig& c) { return std::string(c.ingest.gaps == GapPolicy::Zero ? "zero" : "error"); }});
    k.push_back({"start_date", "calendar date of d_1 for wide files",
                 [](ExperimentConfig& c, std::string_view v) {
                     try {
                         c.ingest.wide_start = parse_iso_date(v);
                     } catch (const DataError& e) {
                         throw ConfigError(std::string("start_date: ") + e.what());
                     }
                 },
                 [](const ExperimentConfig& c) { return format_iso_date(c.ingest.wide_start); }});
    k.push_back({"horizon", "forecast horizon in days",
                 [](ExperimentConfig& c, std::string_view v) { c.horizon = static_cast<int>(parse_int("horizon", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.horizon); }});
    boolean("holdout", "hold out the final horizon days for evaluation", [](ExperimentConfig& c) -> bool& { return c.holdout; });
    k.push_back({"class", "demand class: smooth | erratic | lumpy | intermittent | all",
                 [](ExperimentConfig& c, std::string_view v) {
                     if (v != "all") (void)parse_demand_class(v);
                     c.demand_class = std::string(v);
                 },
                 [](const ExperimentConfig& c) { return c.demand_class; }});
    k.push_back({"models", "comma-separated roster: pr, lasso, gbt-<loss>[@preset]",
                 [](ExperimentConfig& c, std::string_view v) {
                     c.models = split_list(v);
                     for (const auto& m : c.models) (void)ModelSpec::parse(m);
                 },
                 [](const ExperimentConfig& c) { return join(c.models); }});
    k.push_back({"dist", "distribution assumption(s): poisson, negbin",
                 [](ExperimentConfig& c, std::string_view v) {
                     c.dists.clear();
                     for (const auto& d : split_list(v)) c.dists.push_back(parse_distribution(d));
                 },
                 [](const ExperimentConfig& c) {
                     std::vector<std::string> names;
                     for (auto d : c.dists) names.push_back(to_string(d));
                     return join(names);
                 }});
    k.push_back({"benchmarks", "comma-separated: mean, naive, snaive, drift, insample",
                 [](ExperimentConfig& c, std::string_view v) {
                     c.benchmarks = split_list(v);
                     for (const auto& b : c.benchmarks) {
                         if (b != "insample") (void)parse_baseline(b);
                     }
                 },
                 [](const ExperimentConfig& c) { return join(c.benchmarks); }});
    k.push_back({"quantiles", "comma-separated quantile levels (default from profile)",
                 [](ExperimentConfig& c, std::string_view v) {
                     c.quantiles.clear();
                     for (const auto& q : split_list(v)) c.quantiles.push_back(parse_real("quantiles", q));
                     validate_levels(c.quantiles);
                 },
                 [](const ExperimentConfig& c) {
                     std::vector<std::string> parts;
                     for (double q : c.quantile_levels()) parts.push_back(format_double(q));
                     return join(parts);
                 }});
    k.push_back({"n_lags", "number of lag features",
                 [](ExperimentConfig& c, std::string_view v) { c.n_lags = static_cast<int>(parse_int("n_lags", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.n_lags); }});
    k.push_back({"pad", "short-history handling: zero | drop",
                 [](ExperimentConfig& c, std::string_view v) { c.pad = parse_pad_policy(v); },
                 [](const ExperimentConfig& c) { return std::string(c.pad == PadPolicy::ZeroPad ? "zero" : "drop"); }});
    k.push_back({"seed", "random seed",
                 [](ExperimentConfig& c, std::string_view v) { c.seed = static_cast<std::uint64_t>(parse_count("seed", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    k.push_back({"variance_window", "trailing days for variance estimates (0 = full history)",
                 [](ExperimentConfig& c, std::string_view v) { c.variance_window = parse_count("variance_window", v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.variance_window); }});
    boolean("shared_p", "reuse the aggregate NegBin p at the lower level", [](ExperimentConfig& c) -> bool& { return c.shared_p; });
    k.push_back({"lasso_folds", "cross-validation folds for lasso",
                 [](ExperimentConfig& c, std::string_view v) { c.lasso_folds = parse_count("lasso_folds", v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.lasso_folds); }});
    k.push_back({"adi_threshold", "ADI class threshold",
                 [](ExperimentConfig& c, std::string_view v) { c.classifier.adi_threshold = parse_real("adi_threshold", v); },
                 [](const ExperimentConfig& c) { return format_double(c.classifier.adi_threshold); }});
    k.push_back({"cv2_threshold", "CV² class threshold",
                 [](ExperimentConfig& c, std::string_view v) { c.classifier.cv2_threshold = parse_real("cv2_threshold", v); },
                 [](const ExperimentConfig& c) { return format_double(c.classifier.cv2_threshold); }});
    boolean("cv2_nonzero_only", "compute CV² on positive demand sizes only",
            [](ExperimentConfig& c) -> bool& { return c.classifier.cv2_nonzero_only; });
    k.push_back({"gbt_num_trees", "override the number of boosting rounds (-1 = profile)",
                 [](ExperimentConfig& c, std::string_view v) { c.gbt_num_trees = static_cast<int>(parse_int("gbt_num_trees", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.gbt_num_trees); }});
    k.push_back({"sample_sizes", "comma-separated sample sizes for the sampling study",
                 [](ExperimentConfig& c, std::string_view v) {
                     c.sample_sizes.clear();
                     for (const auto& s : split_list(v)) c.sample_sizes.push_back(parse_count("sample_sizes", s));
                 },
                 [](const ExperimentConfig& c) {
                     std::vector<std::string> parts;
                     for (auto s : c.sample_sizes) parts.push_back(std::to_string(s));
                     return join(parts);
                 }});
    k.push_back({"repeats", "repeated draws per sample size",
                 [](ExperimentConfig& c, std::string_view v) { c.repeats = static_cast<int>(parse_int("repeats", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.repeats); }});
    k.push_back({"folds", "number of disjoint folds for the ensemble",
                 [](ExperimentConfig& c, std::string_view v) { c.folds = static_cast<int>(parse_int("folds", v)); },
                 [](const ExperimentConfig& c) { return std::to_string(c.folds); }});
    k.push_back({"ensemble_level", "training level for the fold ensemble: A | L",
                 [](ExperimentConfig& c, std::string_view v) { c.ensemble_level = parse_level(v); },
                 [](const ExperimentConfig& c) { return to_string(c.ensemble_level); }});
    str("quantiles_file", "quantile CSV to evaluate (eval)", &ExperimentConfig::quantiles_path);
    k.push_back({"eval_level", "level of the series in quantiles_file: A | L",
                 [](ExperimentConfig& c, std::string_view v) { c.eval_level = parse_level(v); },
                 [](const ExperimentConfig& c) { return to_string(c.eval_level); }});
    str("eval_model", "model name recorded by eval", &ExperimentConfig::eval_model);
    str("bundle", "result directory read by emit-plots", &ExperimentConfig::bundle_dir);
    str("output", "output directory", &ExperimentConfig::output_dir);
    boolean("write_forecasts", "write per-series quantile and parameter files",
            [](ExperimentConfig& c) -> bool& { return c.write_forecasts; });
    return k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = make_keys();
    return keys;
}

ConfigEntries parse_config_entries(std::istream& in) {
    ConfigEntries out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = csv::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(csv::trim(body.substr(0, eq)));
        const std::string value(csv::trim(body.substr(eq + 1)));
        const auto& keys = config_keys();
        if (std::none_of(keys.begin(), keys.end(), [&](const auto& k) { return k.name == key; })) {
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        out.emplace_back(key, value);
    }
    return out;
}

ConfigEntries read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    return parse_config_entries(in);
}

ExperimentConfig build_config(const ConfigEntries& entries) {
    ExperimentConfig c;
    for (const auto& [key, value] : entries) {
        if (key == "profile") c.profile = parse_profile(value);
    }
    switch (c.profile) {
        case Profile::M5:
            c.format = "wide";
            c.ingest.wide_start = Date{std::chrono::year{2011} / 1 / 29};
            break;
        case Profile::Favorita:
            c.ingest.clamp_negatives = true;
            c.ingest.round_fractional = true;
            break;
        case Profile::Generic:
            break;
    }
    const auto& keys = config_keys();
    for (const auto& [key, value] : entries) {
        const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.name == key; });
        if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
        it->set(c, value);
    }
    if (c.horizon < 1) throw ConfigError("horizon must be >= 1");
    if (c.n_lags < 1) throw ConfigError("n_lags must be >= 1");
    if (c.models.empty()) throw ConfigError("model roster is empty");
    if (c.dists.empty()) throw ConfigError("no distribution assumption selected");
    if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
    return c;
}

std::string canonical_config(const ExperimentConfig& config) {
    std::vector<std::pair<std::string, std::string>> lines;
    for (const auto& k : config_keys()) lines.emplace_back(k.name, k.get(config));
    std::sort(lines.begin(), lines.end());
    std::ostringstream os;
    for (const auto& [k, v] : lines) os << k << " = " << v << '\n';
    return os.str();
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void validate_data_config(const ExperimentConfig& config) {
    if (config.lower_path.empty()) throw ConfigError("no lower-level data file given (lower = ...)");
    if (config.hierarchy_path.empty()) throw ConfigError("no hierarchy file given (hierarchy = ...)");
    for (const auto* p : {&config.lower_path, &config.hierarchy_path}) {
        if (!std::filesystem::exists(*p)) throw ConfigError("file '" + *p + "' does not exist");
    }
}

}  // namespace tdcast
