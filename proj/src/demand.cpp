#include "tdcast/demand.hpp"

#include "tdcast/errors.hpp"

#include <cmath>
#include <ostream>

namespace tdcast {

std::string to_string(DemandClass c) {
    switch (c) {
        case DemandClass::Smooth: return "smooth";
        case DemandClass::Erratic: return "erratic";
        case DemandClass::Lumpy: return "lumpy";
        case DemandClass::Intermittent: return "intermittent";
    }
    return "unknown";
}

DemandClass parse_demand_class(std::string_view name) {
    for (auto c : kAllDemandClasses) {
        if (to_string(c) == name) return c;
    }
    throw ConfigError("unknown demand class '" + std::string(name) + "'");
}

std::string to_string(Level level) { return level == Level::Aggregate ? "A" : "L"; }

Level parse_level(std::string_view name) {
    if (name == "A" || name == "a" || name == "aggregate") return Level::Aggregate;
    if (name == "L" || name == "l" || name == "lower") return Level::Lower;
    throw ConfigError("unknown level '" + std::string(name) + "'");
}

DemandClass classify(double adi, double cv2, const ClassifierOptions& opts) {
    const bool sparse = adi >= opts.adi_threshold;
    const bool variable = cv2 >= opts.cv2_threshold;
    if (!sparse) return variable ? DemandClass::Erratic : DemandClass::Smooth;
    return variable ? DemandClass::Lumpy : DemandClass::Intermittent;
}

DemandProfile demand_stats(const SalesSeries& series, std::size_t train_end, const ClassifierOptions& opts) {
    if (!series.first_nonzero_index || *series.first_nonzero_index > train_end || series.size() == 0) {
        throw DataError("unclassifiable: no sales");
    }
    const std::size_t first = *series.first_nonzero_index;
    const std::size_t last = std::min(train_end, series.size() - 1);

    std::size_t days = 0, sale_days = 0;
    double sum = 0.0;
    for (std::size_t t = first; t <= last; ++t) {
        ++days;
        if (series.values[t] > 0) {
            ++sale_days;
            sum += static_cast<double>(series.values[t]);
        }
    }

    // Two-pass sample variance over the chosen population.
    const std::size_t n = opts.cv2_nonzero_only ? sale_days : days;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t t = first; t <= last; ++t) {
        if (opts.cv2_nonzero_only && series.values[t] == 0) continue;
        const double d = static_cast<double>(series.values[t]) - mean;
        ss += d * d;
    }
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;

    DemandProfile p;
    p.adi = static_cast<double>(days) / static_cast<double>(sale_days);
    p.cv2 = var / (mean * mean);
    p.demand_class = classify(p.adi, p.cv2, opts);
    return p;
}

ClassPartition partition_by_class(const Dataset& dataset, Level level, const ClassifierOptions& opts) {
    ClassPartition part;
    part.level = level;
    for (auto c : kAllDemandClasses) {
        part.groups[c];
        part.lower_groups[c];
    }

    const auto& pool = level == Level::Aggregate ? dataset.aggregate() : dataset.lower();
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const auto& s = pool[k];
        std::optional<DemandProfile> profile;
        try {
            profile = demand_stats(s, dataset.train_end(), opts);
        } catch (const DataError&) {
        }

        if (level == Level::Lower) {
            if (profile) {
                part.profiles.emplace(s.id, *profile);
                part.groups[profile->demand_class].push_back(s.id);
                part.lower_groups[profile->demand_class].push_back(s.id);
            } else {
                part.excluded.push_back(s.id);
                part.lower_excluded.push_back(s.id);
            }
            continue;
        }

        if (profile) {
            part.profiles.emplace(s.id, *profile);
            part.groups[profile->demand_class].push_back(s.id);
        } else {
            part.excluded.push_back(s.id);
        }
        for (auto child : dataset.children(k)) {
            const auto& id = dataset.lower()[child].id;
            if (profile) {
                part.lower_groups[profile->demand_class].push_back(id);
            } else {
                part.lower_excluded.push_back(id);
            }
        }
    }
    return part;
}

void write_demand_classes_csv(std::ostream& out, const ClassPartition& partition) {
    out << "series_id,level,adi,cv2,class\n";
    const auto precision = out.precision(10);
    for (const auto& [id, p] : partition.profiles) {
        out << id << ',' << to_string(partition.level) << ',' << p.adi << ',' << p.cv2 << ','
            << to_string(p.demand_class) << '\n';
    }
    out.precision(precision);
}

}  // namespace tdcast
