#include "tdcast/gbt/booster.hpp"

#include "internal.hpp"
#include "tdcast/errors.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tdcast::gbt {

GbtParams GbtParams::profile(std::string_view name) {
    if (name == "default") return default_profile();
    if (name == "preset") return preset_profile();
    throw ConfigError("unknown gbt profile '" + std::string(name) + "'");
}

void GbtParams::validate() const {
    if (num_trees < 0) throw ConfigError("num_trees must be >= 0");
    if (max_leaves < 2) throw ConfigError("max_leaves must be >= 2");
    if (min_data_in_leaf < 1) throw ConfigError("min_data_in_leaf must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(lambda_leaf >= 0.0)) throw ConfigError("lambda_leaf must be >= 0");
    if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) throw ConfigError("feature_fraction must be in (0, 1]");
    if (!(row_fraction > 0.0 && row_fraction <= 1.0)) throw ConfigError("row_fraction must be in (0, 1]");
    if (max_bins < 2 || max_bins > 256) throw ConfigError("max_bins must be in [2, 256]");
}

BinnedData bin_features(const LagMatrix& matrix, int max_bins) {
    if (max_bins < 2 || max_bins > 256) throw ConfigError("max_bins must be in [2, 256]");
    BinnedData data;
    data.n_rows = matrix.rows();
    data.n_features = matrix.n_lags;
    data.edges.resize(data.n_features);
    data.bins.resize(data.n_features);
    const std::size_t n = data.n_rows;
    const std::size_t p = data.n_features;
    constexpr std::size_t kMaxSample = 200000;
    const std::size_t stride = std::max<std::size_t>(1, n / kMaxSample);

    tbb::parallel_for(std::size_t{0}, p, [&](std::size_t j) {
        std::vector<double> sample;
        sample.reserve(n / stride + 1);
        for (std::size_t r = 0; r < n; r += stride) sample.push_back(matrix.features[r * p + j]);
        std::sort(sample.begin(), sample.end());
        std::vector<double> distinct;
        std::unique_copy(sample.begin(), sample.end(), std::back_inserter(distinct));

        auto& edges = data.edges[j];
        if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
            for (std::size_t k = 1; k < distinct.size(); ++k) edges.push_back(0.5 * (distinct[k - 1] + distinct[k]));
        } else {
            for (int k = 1; k < max_bins; ++k) {
                const double v = sample[static_cast<std::size_t>(k) * sample.size() / static_cast<std::size_t>(max_bins)];
                if (v < distinct.back() && (edges.empty() || v > edges.back())) edges.push_back(v);
            }
        }
        auto& bins = data.bins[j];
        bins.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
            const double x = matrix.features[r * p + j];
            bins[r] = static_cast<std::uint8_t>(std::lower_bound(edges.begin(), edges.end(), x) - edges.begin());
        }
    });
    return data;
}

double Tree::predict(std::span<const double> x) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(node)];
        node = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(node)].value;
}

int Tree::num_leaves() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.feature < 0; }));
}

double GbtModel::predict_raw(std::span<const double> x) const {
    if (x.size() != n_features_) {
        throw DataError("gbt model expects " + std::to_string(n_features_) + " features, got " +
                        std::to_string(x.size()));
    }
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.predict(x);
    return base_score_ + learning_rate_ * sum;
}

double GbtModel::predict(std::span<const double> x) const { return inverse_link(loss_, predict_raw(x)); }

namespace {

// Type-1 empirical quantile (smallest value whose ECDF reaches u).
double type1_quantile(std::vector<double> values, double u) {
    if (values.empty()) return 0.0;
    const double pos = std::ceil(u * static_cast<double>(values.size()));
    const std::size_t k = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(values.size()))) - 1;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
}

// Minimizer of sum huber(res - w) over w by bisection on the monotone derivative.
double huber_location(const std::vector<double>& res, double delta) {
    if (res.empty()) return 0.0;
    auto [lo_it, hi_it] = std::minmax_element(res.begin(), res.end());
    double lo = *lo_it, hi = *hi_it;
    auto slope = [&](double w) {
        double s = 0.0;
        for (double r : res) s += std::clamp(w - r, -delta, delta);
        return s;
    };
    for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

// Exact minimizer over a constant shift w of sum loss(x, f + w), for the floored losses.
double refit_shift(const LossSpec& loss, std::vector<double> residuals) {
    switch (loss.kind) {
        case LossKind::L1: return type1_quantile(std::move(residuals), 0.5);
        case LossKind::Pinball: return type1_quantile(std::move(residuals), loss.quantile);
        case LossKind::Huber: return huber_location(residuals, loss.huber_delta);
        default: return 0.0;
    }
}

// Loss up to f-independent terms; cheaper than loss_value for NegBin.
double core_loss(const LossSpec& loss, double x, double f) {
    if (loss.kind == LossKind::NegBin) {
        const double log_r = std::log(loss.nb_r);
        auto softplus = [](double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); };
        return loss.nb_r * softplus(f - log_r) + x * softplus(log_r - f);
    }
    return loss_value(loss, x, f);
}

struct SplitCandidate {
    int feature = -1;
    std::uint8_t bin = 0;
    double gain = 0.0;
};

struct Leaf {
    int node = 0;
    int depth = 0;
    std::vector<std::uint32_t> rows;  // bagged rows
    SplitCandidate best;
};

class TreeGrower {
public:
    TreeGrower(const BinnedData& data, const std::vector<double>& grad, const std::vector<double>& hess,
               const GbtParams& params, const std::vector<std::size_t>& features)
        : data_(data), grad_(grad), hess_(hess), params_(params), features_(features) {}

    Tree grow(std::vector<std::uint32_t> rows, std::vector<std::vector<std::uint32_t>>& leaf_rows,
              std::vector<int>& leaf_nodes) {
        Tree tree;
        tree.nodes.emplace_back();
        std::vector<Leaf> leaves;
        leaves.push_back({0, 0, std::move(rows), {}});
        leaves.back().best = find_split(leaves.back());

        while (static_cast<int>(leaves.size()) < params_.max_leaves) {
            std::size_t pick = leaves.size();
            for (std::size_t k = 0; k < leaves.size(); ++k) {
                if (leaves[k].best.feature < 0) continue;
                if (pick == leaves.size() || leaves[k].best.gain > leaves[pick].best.gain) pick = k;
            }
            if (pick == leaves.size()) break;

            Leaf parent = std::move(leaves[pick]);
            const auto f = static_cast<std::size_t>(parent.best.feature);
            const auto& fbins = data_.bins[f];
            Leaf left{static_cast<int>(tree.nodes.size()), parent.depth + 1, {}, {}};
            Leaf right{static_cast<int>(tree.nodes.size() + 1), parent.depth + 1, {}, {}};
            for (auto r : parent.rows) (fbins[r] <= parent.best.bin ? left.rows : right.rows).push_back(r);

            auto& node = tree.nodes[static_cast<std::size_t>(parent.node)];
            node.feature = parent.best.feature;
            node.bin = parent.best.bin;
            node.threshold = data_.edges[f][parent.best.bin];
            node.left = left.node;
            node.right = right.node;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();

            left.best = find_split(left);
            right.best = find_split(right);
            leaves[pick] = std::move(left);
            leaves.push_back(std::move(right));
        }

        leaf_rows.clear();
        leaf_nodes.clear();
        for (auto& l : leaves) {
            leaf_nodes.push_back(l.node);
            leaf_rows.push_back(std::move(l.rows));
        }
        return tree;
    }

private:
    SplitCandidate find_split(const Leaf& leaf) const {
        SplitCandidate none;
        const auto n = leaf.rows.size();
        if (n < 2 * static_cast<std::size_t>(params_.min_data_in_leaf)) return none;
        if (params_.max_depth > 0 && leaf.depth >= params_.max_depth) return none;

        double g_sum = 0.0, h_sum = 0.0;
        for (auto r : leaf.rows) {
            g_sum += grad_[r];
            h_sum += hess_[r];
        }
        const double lambda = params_.lambda_leaf;
        const double parent_score = g_sum * g_sum / (h_sum + lambda);

        std::vector<SplitCandidate> per_feature(features_.size());
        tbb::parallel_for(std::size_t{0}, features_.size(), [&](std::size_t k) {
            const std::size_t f = features_[k];
            const std::size_t nb = data_.n_bins(f);
            if (nb < 2) return;
            std::vector<double> gh(2 * nb, 0.0);
            std::vector<std::uint32_t> cnt(nb, 0);
            const auto& fbins = data_.bins[f];
            for (auto r : leaf.rows) {
                const auto b = fbins[r];
                gh[2 * b] += grad_[r];
                gh[2 * b + 1] += hess_[r];
                ++cnt[b];
            }
            double gl = 0.0, hl = 0.0;
            std::size_t cl = 0;
            SplitCandidate best;
            for (std::size_t b = 0; b + 1 < nb; ++b) {
                gl += gh[2 * b];
                hl += gh[2 * b + 1];
                cl += cnt[b];
                const std::size_t cr = n - cl;
                if (cl < static_cast<std::size_t>(params_.min_data_in_leaf)) continue;
                if (cr < static_cast<std::size_t>(params_.min_data_in_leaf)) break;
                const double gr = g_sum - gl, hr = h_sum - hl;
                if (hl < params_.min_sum_hessian || hr < params_.min_sum_hessian) continue;
                const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score;
                if (gain > best.gain) best = {static_cast<int>(f), static_cast<std::uint8_t>(b), gain};
            }
            per_feature[k] = best;
        });

        SplitCandidate best;
        for (const auto& c : per_feature) {
            if (c.feature >= 0 && c.gain > best.gain) best = c;
        }
        if (best.feature >= 0 && !(best.gain > 1e-12 * parent_score)) return none;
        return best;
    }

    const BinnedData& data_;
    const std::vector<double>& grad_;
    const std::vector<double>& hess_;
    const GbtParams& params_;
    const std::vector<std::size_t>& features_;
};

// Leaf index of every row, routed through binned splits.
void route_rows(const Tree& tree, const BinnedData& data, const std::vector<int>& leaf_nodes,
                std::vector<std::vector<std::uint32_t>>& members) {
    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < leaf_nodes.size(); ++k) slot_of[static_cast<std::size_t>(leaf_nodes[k])] = static_cast<int>(k);
    members.assign(leaf_nodes.size(), {});
    for (std::uint32_t r = 0; r < data.n_rows; ++r) {
        int node = 0;
        while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
            const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
            node = data.bins[static_cast<std::size_t>(nd.feature)][r] <= nd.bin ? nd.left : nd.right;
        }
        members[static_cast<std::size_t>(slot_of[static_cast<std::size_t>(node)])].push_back(r);
    }
}

}  // namespace

double optimal_constant(const LossSpec& loss, std::span<const double> targets) {
    if (targets.empty()) throw DataError("no targets");
    std::vector<double> t(targets.begin(), targets.end());
    switch (loss.kind) {
        case LossKind::L2:
            return std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
        case LossKind::L1:
        case LossKind::Pinball:
        case LossKind::Huber:
            return refit_shift(loss, std::move(t));
        case LossKind::Poisson:
        case LossKind::Tweedie:
        case LossKind::NegBin: {
            const double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
            return std::log(std::max(mean, 1e-12));
        }
    }
    return 0.0;
}

std::vector<double> predict_binned_raw(const GbtModel& model, const BinnedData& data) {
    std::vector<double> raw(data.n_rows, model.base_score());
    for (const auto& tree : model.trees()) {
        for (std::size_t r = 0; r < data.n_rows; ++r) {
            int node = 0;
            while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
                const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
                node = data.bins[static_cast<std::size_t>(nd.feature)][r] <= nd.bin ? nd.left : nd.right;
            }
            raw[r] += model.learning_rate() * tree.nodes[static_cast<std::size_t>(node)].value;
        }
    }
    return raw;
}

GbtModel fit_gbt(const BinnedData& data, std::span<const double> targets, const LossSpec& loss,
                 const GbtParams& params, std::uint64_t seed) {
    loss.validate();
    params.validate();
    const std::size_t n = data.n_rows;
    if (n == 0) throw DataError("cannot fit a gbt model on an empty matrix");
    if (targets.size() != n) throw DataError("target count does not match the feature matrix");
    for (double y : targets) {
        if (!std::isfinite(y)) throw NumericalError("non-finite training target");
        if (loss.link() == Link::Log && y < 0.0) throw DataError("log-link losses need non-negative targets");
    }

    GbtModel model;
    model.loss_ = loss;
    model.learning_rate_ = params.learning_rate;
    model.n_features_ = data.n_features;
    model.base_score_ = optimal_constant(loss, targets);

    std::vector<double> f(n, model.base_score_);
    auto total_loss = [&] {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += core_loss(loss, targets[r], f[r]);
        return s / static_cast<double>(n);
    };
    model.train_loss_.push_back(total_loss());

    const bool constant_target = std::all_of(targets.begin(), targets.end(), [&](double y) { return y == targets[0]; });
    if (constant_target) return model;

    std::mt19937_64 rng(seed);
    std::vector<double> grad(n), hess(n);
    std::vector<std::uint32_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0U);
    std::vector<std::size_t> all_features(data.n_features);
    std::iota(all_features.begin(), all_features.end(), std::size_t{0});
    std::vector<std::vector<std::uint32_t>> bag_leaves, full_leaves;
    std::vector<int> leaf_nodes;

    // Floored losses grow trees on unit Hessians (the floor would never clear
    // min_sum_hessian); their leaf values are refit on residuals below.
    const bool unit_hessian = loss.floored_hessian();
    for (int iter = 0; iter < params.num_trees; ++iter) {
        for (std::size_t r = 0; r < n; ++r) {
            const auto gh = loss_grad_hess(loss, targets[r], f[r]);
            grad[r] = gh.g;
            hess[r] = unit_hessian ? 1.0 : gh.h;
        }

        std::vector<std::uint32_t> rows;
        if (params.row_fraction < 1.0) {
            const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(params.row_fraction * static_cast<double>(n)));
            std::sample(all_rows.begin(), all_rows.end(), std::back_inserter(rows), k, rng);
        } else {
            rows = all_rows;
        }
        std::vector<std::size_t> features;
        if (params.feature_fraction < 1.0) {
            const auto k = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(params.feature_fraction * static_cast<double>(data.n_features))));
            std::sample(all_features.begin(), all_features.end(), std::back_inserter(features), k, rng);
        } else {
            features = all_features;
        }

        TreeGrower grower(data, grad, hess, params, features);
        Tree tree = grower.grow(std::move(rows), bag_leaves, leaf_nodes);
        route_rows(tree, data, leaf_nodes, full_leaves);

        for (std::size_t k = 0; k < leaf_nodes.size(); ++k) {
            const auto& bag = bag_leaves[k];
            double w = 0.0;
            if (!bag.empty()) {
                if (loss.floored_hessian()) {
                    std::vector<double> residuals;
                    residuals.reserve(bag.size());
                    for (auto r : bag) residuals.push_back(targets[r] - f[r]);
                    w = refit_shift(loss, std::move(residuals));
                } else {
                    double g = 0.0, h = 0.0;
                    for (auto r : bag) {
                        g += grad[r];
                        h += hess[r];
                    }
                    w = -g / (h + params.lambda_leaf);
                }
            }
            if (!std::isfinite(w)) w = 0.0;

            // Halve the step until this leaf's training loss does not increase.
            const auto& members = full_leaves[k];
            double before = 0.0;
            for (auto r : members) before += core_loss(loss, targets[r], f[r]);
            for (int halving = 0; halving < 40 && w != 0.0; ++halving) {
                double after = 0.0;
                bool finite = true;
                for (auto r : members) {
                    const double fr = f[r] + params.learning_rate * w;
                    if (!std::isfinite(fr)) {
                        finite = false;
                        break;
                    }
                    after += core_loss(loss, targets[r], fr);
                }
                if (finite && std::isfinite(after) && after <= before) break;
                w *= 0.5;
                if (halving == 39) w = 0.0;
            }
            tree.nodes[static_cast<std::size_t>(leaf_nodes[k])].value = w;
            for (auto r : members) f[r] += params.learning_rate * w;
        }

        model.trees_.push_back(std::move(tree));
        model.train_loss_.push_back(total_loss());
    }
    return model;
}

GbtModel fit_gbt(const LagMatrix& matrix, const LossSpec& loss, const GbtParams& params, std::uint64_t seed) {
    if (matrix.rows() == 0) throw DataError("cannot fit a gbt model on an empty matrix");
    const auto data = bin_features(matrix, params.max_bins);
    return fit_gbt(data, matrix.targets, loss, params, seed);
}

}  // namespace tdcast::gbt
