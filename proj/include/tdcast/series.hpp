#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tdcast {

using Date = std::chrono::sys_days;
using Count = std::int64_t;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Throws DataError on failure.
Date parse_iso_date(std::string_view text);
std::string format_iso_date(Date date);

/**
 * One daily sales series. Values are non-negative unit counts on a dense
 * calendar grid starting at start_date. first_nonzero_index is maintained
 * by make() and points at the first strictly positive value.
 */
struct SalesSeries {
    std::string id;
    Date start_date{};
    std::vector<Count> values;
    std::optional<std::size_t> first_nonzero_index;

    static SalesSeries make(std::string id, Date start_date, std::vector<Count> values);

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] bool operator==(const SalesSeries&) const = default;
};

/// Many-to-one mapping between lower-level and aggregate-level series ids.
struct HierarchyMap {
    std::map<std::string, std::string> parent_of;
    std::map<std::string, std::vector<std::string>> children_of;  // children sorted by id

    [[nodiscard]] bool operator==(const HierarchyMap&) const = default;
};

enum class GapPolicy { Zero, Error };

struct IngestOptions {
    bool clamp_negatives = false;
    /// Round non-integral quantities to the nearest integer instead of rejecting them.
    bool round_fractional = false;
    GapPolicy gaps = GapPolicy::Zero;
    /// Overrides the grid bounds; otherwise the grid spans min..max date over all rows.
    std::optional<Date> grid_start;
    std::optional<Date> grid_end;
    /// First calendar day of `d_1` for the wide (M5-style) adapter.
    Date wide_start = Date{std::chrono::year{2011} / 1 / 29};
};

/// Long format: header `series_id,date,quantity`. Output is sorted by id.
std::vector<SalesSeries> parse_long_csv(std::istream& in, const IngestOptions& opts = {});
std::vector<SalesSeries> ingest_long_csv(const std::string& path, const IngestOptions& opts = {});

/// Wide format: an `id` column plus `d_1..d_N` day columns; other columns are ignored.
std::vector<SalesSeries> parse_wide_csv(std::istream& in, const IngestOptions& opts = {});
std::vector<SalesSeries> ingest_wide_csv(const std::string& path, const IngestOptions& opts = {});

/// Writes every (id, date, quantity) cell of the dense grid in long format.
void write_long_csv(std::ostream& out, std::span<const SalesSeries> series);
void write_wide_csv(std::ostream& out, std::span<const SalesSeries> series);

/// Hierarchy file: header `lower_id,aggregate_id`.
std::map<std::string, std::string> parse_hierarchy_csv(std::istream& in);
std::map<std::string, std::string> read_hierarchy_csv(const std::string& path);
void write_hierarchy_csv(std::ostream& out, const std::map<std::string, std::string>& parent_of);

/// Sums children into aggregate series on the common grid (exact integer sums).
std::pair<std::vector<SalesSeries>, HierarchyMap> build_aggregates(
    std::span<const SalesSeries> lower, const std::map<std::string, std::string>& parent_of);

/**
 * Two-level dataset. train_end is the index of the last training observation;
 * when a hold-out is attached the final `horizon` days are test data.
 */
class Dataset {
public:
    Dataset() = default;

    static Dataset make(std::vector<SalesSeries> lower,
                        const std::map<std::string, std::string>& parent_of,
                        int horizon, bool holdout);

    [[nodiscard]] const std::vector<SalesSeries>& lower() const noexcept { return lower_; }
    [[nodiscard]] const std::vector<SalesSeries>& aggregate() const noexcept { return aggregate_; }
    [[nodiscard]] const HierarchyMap& hierarchy() const noexcept { return hierarchy_; }
    [[nodiscard]] int horizon() const noexcept { return horizon_; }
    [[nodiscard]] std::size_t train_end() const noexcept { return train_end_; }
    [[nodiscard]] bool has_holdout() const noexcept { return holdout_; }
    [[nodiscard]] std::size_t length() const noexcept { return length_; }

    [[nodiscard]] std::size_t lower_index(const std::string& id) const;
    [[nodiscard]] std::size_t aggregate_index(const std::string& id) const;
    /// Indices into lower() of the children of aggregate `agg`, in hierarchy order.
    [[nodiscard]] const std::vector<std::size_t>& children(std::size_t agg) const { return children_.at(agg); }
    [[nodiscard]] std::size_t parent(std::size_t lower) const { return parent_.at(lower); }

private:
    std::vector<SalesSeries> lower_;
    std::vector<SalesSeries> aggregate_;
    HierarchyMap hierarchy_;
    std::map<std::string, std::size_t> lower_index_;
    std::map<std::string, std::size_t> aggregate_index_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> parent_;
    int horizon_ = 0;
    std::size_t train_end_ = 0;
    std::size_t length_ = 0;
    bool holdout_ = false;
};

/// Training slice [0, train_end] of a series as doubles.
std::vector<double> training_values(const SalesSeries& series, std::size_t train_end);
/// Observed values at train_end+1 .. train_end+horizon.
std::vector<double> test_values(const SalesSeries& series, std::size_t train_end, int horizon);

}  // namespace tdcast
