#pragma once

#include "tdcast/features.hpp"
#include "tdcast/gbt/loss.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tdcast::gbt {

struct GbtParams {
    int num_trees = 100;
    int max_leaves = 31;
    int max_depth = -1;  // <= 0: unlimited
    int min_data_in_leaf = 20;
    double min_sum_hessian = 1e-3;
    double lambda_leaf = 0.0;
    double learning_rate = 0.1;
    double feature_fraction = 1.0;
    double row_fraction = 1.0;
    int max_bins = 255;

    static GbtParams default_profile() { return {}; }
    /// Larger, slower-learning ensemble with feature and row subsampling.
    static GbtParams preset_profile() {
        GbtParams p;
        p.num_trees = 400;
        p.max_leaves = 255;
        p.learning_rate = 0.05;
        p.feature_fraction = 0.8;
        p.row_fraction = 0.8;
        return p;
    }
    static GbtParams profile(std::string_view name);

    void validate() const;
};

/**
 * Quantile-binned copy of a feature matrix (column-major, one byte per cell).
 * Bin b of feature j holds values in (edges[j][b-1], edges[j][b]].
 */
struct BinnedData {
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::vector<std::vector<double>> edges;       // per feature, ascending
    std::vector<std::vector<std::uint8_t>> bins;  // per feature, n_rows entries

    [[nodiscard]] std::size_t n_bins(std::size_t feature) const { return edges[feature].size() + 1; }
};

BinnedData bin_features(const LagMatrix& matrix, int max_bins = 255);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // go left when x <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf weight
    std::uint8_t bin = 0;  // split bin (training-time routing)
};

struct Tree {
    std::vector<TreeNode> nodes;

    [[nodiscard]] double predict(std::span<const double> x) const;
    [[nodiscard]] int num_leaves() const;
};

class GbtModel final : public PointModel {
public:
    GbtModel() = default;

    /// Raw score f = base_score + learning_rate * sum of leaf weights.
    [[nodiscard]] double predict_raw(std::span<const double> x) const;
    /// Mean-scale prediction (e^f for log-link losses).
    [[nodiscard]] double predict(std::span<const double> x) const override;
    [[nodiscard]] std::size_t n_lags() const override { return n_features_; }

    [[nodiscard]] const LossSpec& loss() const noexcept { return loss_; }
    [[nodiscard]] double base_score() const noexcept { return base_score_; }
    [[nodiscard]] double learning_rate() const noexcept { return learning_rate_; }
    [[nodiscard]] const std::vector<Tree>& trees() const noexcept { return trees_; }
    /// Estimated dispersion for negative-binomial fits.
    [[nodiscard]] std::optional<double> r_hat() const noexcept { return r_hat_; }
    void set_r_hat(double r) { r_hat_ = r; }
    /// Mean training loss before any tree and after each tree.
    [[nodiscard]] const std::vector<double>& train_loss() const noexcept { return train_loss_; }

private:
    friend GbtModel fit_gbt(const BinnedData&, std::span<const double>, const LossSpec&, const GbtParams&,
                            std::uint64_t);
    friend void write_gbt_model(std::ostream&, const GbtModel&);
    friend GbtModel read_gbt_model(std::istream&);

    LossSpec loss_;
    double base_score_ = 0.0;
    double learning_rate_ = 0.1;
    std::size_t n_features_ = 0;
    std::vector<Tree> trees_;
    std::optional<double> r_hat_;
    std::vector<double> train_loss_;
};

/// Loss-minimizing constant raw score for the targets.
double optimal_constant(const LossSpec& loss, std::span<const double> targets);

GbtModel fit_gbt(const BinnedData& data, std::span<const double> targets, const LossSpec& loss,
                 const GbtParams& params, std::uint64_t seed);
GbtModel fit_gbt(const LagMatrix& matrix, const LossSpec& loss, const GbtParams& params, std::uint64_t seed);

struct NegBinOptions {
    std::optional<double> r_init;
    int max_outer = 20;
    double tol = 1e-4;  // on |ln r_new - ln r_old|
    double r_lower = 0.01;
    double r_upper = 1e6;
};

struct NegBinFit {
    GbtModel model;
    double r = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Set when the loop ended without converging; the best-likelihood iterate is returned.
    bool warning = false;
    std::vector<double> r_path;  // r used for each outer fit, then the final estimate
};

/// Method-of-moments dispersion m²/(v-m), clipped; returns r_upper when v <= m.
double moment_dispersion(std::span<const double> targets, double r_lower = 0.01, double r_upper = 1e6);

/// argmin over r in [r_lower, r_upper] of nb_nll(targets, raw, r), searched on ln r.
double minimize_dispersion(std::span<const double> targets, std::span<const double> raw_scores,
                           double r_lower = 0.01, double r_upper = 1e6);

/// Alternates boosting at fixed r with a 1-D likelihood update of r.
NegBinFit fit_gbt_negbin(const BinnedData& data, std::span<const double> targets, const GbtParams& params,
                         std::uint64_t seed, const NegBinOptions& opts = {});
NegBinFit fit_gbt_negbin(const LagMatrix& matrix, const GbtParams& params, std::uint64_t seed,
                         const NegBinOptions& opts = {});

/// Versioned text format.
void write_gbt_model(std::ostream& out, const GbtModel& model);
GbtModel read_gbt_model(std::istream& in);

}  // namespace tdcast::gbt
