#include "tdcast/series.hpp"

#include "csv.hpp"
#include "tdcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace tdcast {

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return in;
}

Count to_count(double quantity, const IngestOptions& opts, std::size_t line_no) {
    if (!std::isfinite(quantity)) {
        throw DataError("line " + std::to_string(line_no) + ": non-finite quantity");
    }
    double rounded = std::round(quantity);
    if (rounded != quantity && !opts.round_fractional) {
        throw DataError("line " + std::to_string(line_no) + ": non-integral quantity");
    }
    if (rounded < 0.0 && opts.clamp_negatives) rounded = 0.0;
    if (rounded < 0.0) {
        throw DataError("line " + std::to_string(line_no) + ": negative quantity (enable clamp_negatives)");
    }
    return static_cast<Count>(rounded);
}

}  // namespace

Date parse_iso_date(std::string_view text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const std::string s(text);
    if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
        throw DataError("invalid ISO date '" + s + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw DataError("invalid ISO date '" + s + "'");
    return Date{ymd};
}

std::string format_iso_date(Date date) {
    const std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

SalesSeries SalesSeries::make(std::string id, Date start_date, std::vector<Count> values) {
    SalesSeries s;
    s.id = std::move(id);
    s.start_date = start_date;
    s.values = std::move(values);
    for (std::size_t t = 0; t < s.values.size(); ++t) {
        if (s.values[t] < 0) throw DataError("series '" + s.id + "' has a negative value");
        if (!s.first_nonzero_index && s.values[t] > 0) s.first_nonzero_index = t;
    }
    return s;
}

std::vector<SalesSeries> parse_long_csv(std::istream& in, const IngestOptions& opts) {
    std::string line;
    std::size_t line_no = 0;
    if (!csv::next_line(in, line, line_no)) throw DataError("empty file");
    const auto header = csv::split(line);
    if (header.size() != 3 || header[0] != "series_id" || header[1] != "date" || header[2] != "quantity") {
        throw DataError("line " + std::to_string(line_no) + ": expected header series_id,date,quantity");
    }

    // (id, date) -> quantity; std::map gives order-independent, id-sorted output.
    std::map<std::string, std::map<Date, Count>> cells;
    std::optional<Date> lo, hi;
    while (csv::next_line(in, line, line_no)) {
        const auto fields = csv::split(line);
        if (fields.size() != 3 || fields[0].empty()) {
            throw DataError("line " + std::to_string(line_no) + ": malformed row");
        }
        Date date;
        try {
            date = parse_iso_date(fields[1]);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto qty = csv::to_double(fields[2]);
        if (!qty) throw DataError("line " + std::to_string(line_no) + ": malformed quantity");
        auto& row = cells[std::string(fields[0])];
        if (!row.emplace(date, to_count(*qty, opts, line_no)).second) {
            throw DataError("duplicate key (" + std::string(fields[0]) + ", " + std::string(fields[1]) + ")");
        }
        lo = lo ? std::min(*lo, date) : date;
        hi = hi ? std::max(*hi, date) : date;
    }
    if (cells.empty()) throw DataError("empty file: no data rows");

    const Date start = opts.grid_start.value_or(*lo);
    const Date end = opts.grid_end.value_or(*hi);
    if (end < start) throw DataError("grid end precedes grid start");
    const auto length = static_cast<std::size_t>((end - start).count() + 1);

    std::vector<SalesSeries> out;
    out.reserve(cells.size());
    for (auto& [id, row] : cells) {
        std::vector<Count> values(length, 0);
        for (const auto& [date, q] : row) {
            if (date < start || date > end) continue;
            values[static_cast<std::size_t>((date - start).count())] = q;
        }
        if (opts.gaps == GapPolicy::Error) {
            for (std::size_t t = 0; t < length; ++t) {
                if (!row.contains(start + std::chrono::days{t})) {
                    throw DataError("series '" + id + "' has no row for " +
                                    format_iso_date(start + std::chrono::days{t}));
                }
            }
        }
        out.push_back(SalesSeries::make(id, start, std::move(values)));
    }
    return out;
}

std::vector<SalesSeries> ingest_long_csv(const std::string& path, const IngestOptions& opts) {
    auto in = open_input(path);
    return parse_long_csv(in, opts);
}

std::vector<SalesSeries> parse_wide_csv(std::istream& in, const IngestOptions& opts) {
    std::string line;
    std::size_t line_no = 0;
    if (!csv::next_line(in, line, line_no)) throw DataError("empty file");
    const auto header = csv::split(line);

    std::optional<std::size_t> id_col;
    std::vector<std::pair<std::size_t, std::size_t>> day_cols;  // (column, day index)
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "id") {
            id_col = c;
        } else if (header[c].size() > 2 && header[c].substr(0, 2) == "d_") {
            const auto day = csv::to_int(header[c].substr(2));
            if (!day || *day < 1) throw DataError("line 1: bad day column '" + std::string(header[c]) + "'");
            day_cols.emplace_back(c, static_cast<std::size_t>(*day - 1));
        }
    }
    if (!id_col || day_cols.empty()) throw DataError("line 1: expected an id column and d_1..d_N columns");
    std::size_t length = 0;
    for (const auto& [col, day] : day_cols) length = std::max(length, day + 1);
    if (opts.gaps == GapPolicy::Error && day_cols.size() != length) {
        throw DataError("wide file is missing day columns");
    }

    std::map<std::string, std::vector<Count>> rows;
    while (csv::next_line(in, line, line_no)) {
        const auto fields = csv::split(line);
        if (fields.size() != header.size() || fields[*id_col].empty()) {
            throw DataError("line " + std::to_string(line_no) + ": malformed row");
        }
        std::vector<Count> values(length, 0);
        for (const auto& [col, day] : day_cols) {
            const auto qty = csv::to_double(fields[col]);
            if (!qty) throw DataError("line " + std::to_string(line_no) + ": malformed quantity");
            values[day] = to_count(*qty, opts, line_no);
        }
        const std::string id(fields[*id_col]);
        if (!rows.emplace(id, std::move(values)).second) throw DataError("duplicate key (" + id + ")");
    }
    if (rows.empty()) throw DataError("empty file: no data rows");

    std::vector<SalesSeries> out;
    out.reserve(rows.size());
    for (auto& [id, values] : rows) out.push_back(SalesSeries::make(id, opts.wide_start, std::move(values)));
    return out;
}

std::vector<SalesSeries> ingest_wide_csv(const std::string& path, const IngestOptions& opts) {
    auto in = open_input(path);
    return parse_wide_csv(in, opts);
}

void write_long_csv(std::ostream& out, std::span<const SalesSeries> series) {
    out << "series_id,date,quantity\n";
    for (const auto& s : series) {
        for (std::size_t t = 0; t < s.size(); ++t) {
            out << s.id << ',' << format_iso_date(s.start_date + std::chrono::days{t}) << ',' << s.values[t]
                << '\n';
        }
    }
}

void write_wide_csv(std::ostream& out, std::span<const SalesSeries> series) {
    std::size_t length = 0;
    for (const auto& s : series) length = std::max(length, s.size());
    out << "id";
    for (std::size_t d = 1; d <= length; ++d) out << ",d_" << d;
    out << '\n';
    for (const auto& s : series) {
        out << s.id;
        for (std::size_t t = 0; t < length; ++t) out << ',' << (t < s.size() ? s.values[t] : 0);
        out << '\n';
    }
}

std::map<std::string, std::string> parse_hierarchy_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!csv::next_line(in, line, line_no)) throw DataError("empty hierarchy file");
    const auto header = csv::split(line);
    if (header.size() != 2 || header[0] != "lower_id" || header[1] != "aggregate_id") {
        throw DataError("line " + std::to_string(line_no) + ": expected header lower_id,aggregate_id");
    }
    std::map<std::string, std::string> parent_of;
    while (csv::next_line(in, line, line_no)) {
        const auto fields = csv::split(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            throw DataError("line " + std::to_string(line_no) + ": malformed row");
        }
        if (!parent_of.emplace(std::string(fields[0]), std::string(fields[1])).second) {
            throw DataError("lower id '" + std::string(fields[0]) + "' has more than one parent");
        }
    }
    return parent_of;
}

std::map<std::string, std::string> read_hierarchy_csv(const std::string& path) {
    auto in = open_input(path);
    return parse_hierarchy_csv(in);
}

void write_hierarchy_csv(std::ostream& out, const std::map<std::string, std::string>& parent_of) {
    out << "lower_id,aggregate_id\n";
    for (const auto& [lower, agg] : parent_of) out << lower << ',' << agg << '\n';
}

std::pair<std::vector<SalesSeries>, HierarchyMap> build_aggregates(
    std::span<const SalesSeries> lower, const std::map<std::string, std::string>& parent_of) {
    HierarchyMap map;
    std::map<std::string, std::vector<const SalesSeries*>> members;
    for (const auto& s : lower) {
        const auto it = parent_of.find(s.id);
        if (it == parent_of.end()) throw DataError("lower id '" + s.id + "' missing from hierarchy");
        map.parent_of.emplace(s.id, it->second);
        members[it->second].push_back(&s);
    }

    std::vector<SalesSeries> aggregates;
    aggregates.reserve(members.size());
    for (auto& [agg_id, kids] : members) {
        std::sort(kids.begin(), kids.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
        const Date start = kids.front()->start_date;
        const std::size_t length = kids.front()->size();
        std::vector<Count> sum(length, 0);
        auto& names = map.children_of[agg_id];
        for (const auto* k : kids) {
            if (k->start_date != start || k->size() != length) {
                throw DataError("series '" + k->id + "' is not on the common grid of '" + agg_id + "'");
            }
            for (std::size_t t = 0; t < length; ++t) sum[t] += k->values[t];
            names.push_back(k->id);
        }
        aggregates.push_back(SalesSeries::make(agg_id, start, std::move(sum)));
    }
    return {std::move(aggregates), std::move(map)};
}

Dataset Dataset::make(std::vector<SalesSeries> lower, const std::map<std::string, std::string>& parent_of,
                      int horizon, bool holdout) {
    if (lower.empty()) throw DataError("dataset has no series");
    if (horizon < 1) throw DataError("horizon must be >= 1");
    std::sort(lower.begin(), lower.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < lower.size(); ++i) {
        if (lower[i].id == lower[i - 1].id) throw DataError("duplicate series id '" + lower[i].id + "'");
    }

    Dataset ds;
    auto [aggregates, map] = build_aggregates(lower, parent_of);
    ds.length_ = lower.front().size();
    for (const auto& s : lower) {
        if (s.size() != ds.length_ || s.start_date != lower.front().start_date) {
            throw DataError("series '" + s.id + "' is not on the common calendar grid");
        }
    }
    ds.horizon_ = horizon;
    ds.holdout_ = holdout;
    const std::size_t needed = holdout ? static_cast<std::size_t>(horizon) + 1 : 1;
    if (ds.length_ < needed) throw DataError("series are too short for the requested hold-out");
    ds.train_end_ = ds.length_ - needed;

    ds.lower_ = std::move(lower);
    ds.aggregate_ = std::move(aggregates);
    ds.hierarchy_ = std::move(map);
    for (std::size_t i = 0; i < ds.lower_.size(); ++i) ds.lower_index_.emplace(ds.lower_[i].id, i);
    for (std::size_t j = 0; j < ds.aggregate_.size(); ++j) ds.aggregate_index_.emplace(ds.aggregate_[j].id, j);
    ds.children_.resize(ds.aggregate_.size());
    ds.parent_.resize(ds.lower_.size());
    for (std::size_t j = 0; j < ds.aggregate_.size(); ++j) {
        for (const auto& child : ds.hierarchy_.children_of.at(ds.aggregate_[j].id)) {
            const auto i = ds.lower_index_.at(child);
            ds.children_[j].push_back(i);
            ds.parent_[i] = j;
        }
    }
    return ds;
}

std::size_t Dataset::lower_index(const std::string& id) const {
    const auto it = lower_index_.find(id);
    if (it == lower_index_.end()) throw DataError("unknown lower series '" + id + "'");
    return it->second;
}

std::size_t Dataset::aggregate_index(const std::string& id) const {
    const auto it = aggregate_index_.find(id);
    if (it == aggregate_index_.end()) throw DataError("unknown aggregate series '" + id + "'");
    return it->second;
}

std::vector<double> training_values(const SalesSeries& series, std::size_t train_end) {
    const std::size_t n = std::min(train_end + 1, series.size());
    return {series.values.begin(), series.values.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<double> test_values(const SalesSeries& series, std::size_t train_end, int horizon) {
    if (train_end + static_cast<std::size_t>(horizon) >= series.size()) {
        throw DataError("series '" + series.id + "' has no hold-out of length " + std::to_string(horizon));
    }
    const auto first = series.values.begin() + static_cast<std::ptrdiff_t>(train_end + 1);
    return {first, first + horizon};
}

}  // namespace tdcast
