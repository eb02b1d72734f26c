#pragma once

#include "tdcast/series.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tdcast {

enum class DemandClass { Smooth, Erratic, Lumpy, Intermittent };

inline constexpr DemandClass kAllDemandClasses[] = {DemandClass::Smooth, DemandClass::Erratic,
                                                    DemandClass::Lumpy, DemandClass::Intermittent};

std::string to_string(DemandClass c);
DemandClass parse_demand_class(std::string_view name);

struct ClassifierOptions {
    double adi_threshold = 1.32;
    double cv2_threshold = 0.49;
    /// Compute CV² over positive demand sizes only instead of every day since the first sale.
    bool cv2_nonzero_only = false;
};

struct DemandProfile {
    double adi = 0.0;  // days per sale event
    double cv2 = 0.0;
    DemandClass demand_class = DemandClass::Smooth;
};

/// Quadrant lookup; ties at a threshold fall into the ">=" side.
DemandClass classify(double adi, double cv2, const ClassifierOptions& opts = {});

/**
 * ADI and CV² over [first sale, train_end]. CV² uses the sample (n-1)
 * standard deviation. Throws DataError("unclassifiable: no sales") when the
 * window holds no sale.
 */
DemandProfile demand_stats(const SalesSeries& series, std::size_t train_end, const ClassifierOptions& opts = {});

enum class Level { Aggregate, Lower };

std::string to_string(Level level);
Level parse_level(std::string_view name);

struct ClassPartition {
    Level level = Level::Aggregate;
    /// Ids at the classification level, grouped by class. Every class key is present.
    std::map<DemandClass, std::vector<std::string>> groups;
    /// Lower-level ids grouped by class; inherited from the parent when level == Aggregate.
    std::map<DemandClass, std::vector<std::string>> lower_groups;
    std::map<std::string, DemandProfile> profiles;
    /// Unclassifiable ids at the classification level.
    std::vector<std::string> excluded;
    std::vector<std::string> lower_excluded;
};

ClassPartition partition_by_class(const Dataset& dataset, Level level, const ClassifierOptions& opts = {});

/// `series_id,level,adi,cv2,class` rows for every classified series.
void write_demand_classes_csv(std::ostream& out, const ClassPartition& partition);

}  // namespace tdcast
