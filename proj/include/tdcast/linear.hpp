#pragma once

#include "tdcast/features.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace tdcast {

/**
 * Running X'X, X'y and y'y for a design matrix augmented with a leading
 * column of ones. Accumulators merge by addition, so per-series or per-chunk
 * partial sums can be reduced in any order.
 */
class NormalAccumulator {
public:
    explicit NormalAccumulator(std::size_t n_features = 0);

    void add_row(std::span<const double> x, double y);
    /// Adds a block of rows (rows x n_features, no intercept column).
    void add_rows(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);
    void merge(const NormalAccumulator& other);
    void subtract(const NormalAccumulator& other);

    [[nodiscard]] std::size_t n_features() const noexcept { return n_features_; }
    [[nodiscard]] std::uint64_t n_rows() const noexcept { return n_rows_; }
    [[nodiscard]] const Eigen::MatrixXd& xtx() const noexcept { return xtx_; }
    [[nodiscard]] const Eigen::VectorXd& xty() const noexcept { return xty_; }
    [[nodiscard]] double yty() const noexcept { return yty_; }

private:
    std::size_t n_features_ = 0;
    std::uint64_t n_rows_ = 0;
    Eigen::MatrixXd xtx_;
    Eigen::VectorXd xty_;
    double yty_ = 0.0;
};

NormalAccumulator accumulate(const LagMatrix& matrix);

/**
 * Streams lag windows of each series straight into the accumulator without
 * building the pooled design matrix. Rows match embed(series, train_end, n_lags, pad).
 */
NormalAccumulator accumulate_series(std::span<const SalesSeries> series, std::size_t train_end, int n_lags,
                                    PadPolicy pad = PadPolicy::ZeroPad);

/// Fold of a training row for cross-validation: a seeded hash of (series, time).
std::size_t row_fold(std::uint64_t series_key, std::uint64_t time, std::size_t n_folds, std::uint64_t seed);

/// One accumulator per fold; rows assigned by row_fold() keyed on the series' position in `series`.
std::vector<NormalAccumulator> accumulate_series_folds(std::span<const SalesSeries> series, std::size_t train_end,
                                                       int n_lags, PadPolicy pad, std::size_t n_folds,
                                                       std::uint64_t seed);

enum class Regularization { None, Lasso };

class LinearModel final : public PointModel {
public:
    LinearModel() = default;
    LinearModel(Eigen::VectorXd beta, Regularization reg, double lambda = 0.0);

    [[nodiscard]] double predict(std::span<const double> lags) const override;
    [[nodiscard]] std::size_t n_lags() const override { return static_cast<std::size_t>(beta_.size()) - 1; }

    /// Entry 0 is the intercept.
    [[nodiscard]] const Eigen::VectorXd& beta() const noexcept { return beta_; }
    [[nodiscard]] Regularization regularization() const noexcept { return reg_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }

private:
    Eigen::VectorXd beta_ = Eigen::VectorXd::Zero(1);
    Regularization reg_ = Regularization::None;
    double lambda_ = 0.0;
};

/**
 * Solves (X'X + eps*I')beta = X'y where I' leaves the intercept unpenalized.
 * Default eps = 1e-8 * trace(X'X) / (p+1).
 */
LinearModel solve_ols(const NormalAccumulator& acc, std::optional<double> ridge_eps = std::nullopt);

struct LassoOptions {
    std::size_t cv_folds = 10;
    std::size_t n_lambda = 100;
    double lambda_min_ratio = 1e-4;
    /// Explicit grid (any order); when empty a log-spaced grid from lambda_max is used.
    std::vector<double> lambda_grid;
    double tol = 1e-9;
    std::size_t max_sweeps = 100000;
    std::uint64_t seed = 0;
};

struct LassoFit {
    LinearModel model;
    std::vector<double> lambdas;  // descending
    std::vector<double> cv_mse;   // per lambda
    std::size_t best = 0;
};

/// Cross-validated Lasso over pre-split fold accumulators (coordinate descent on the standardized Gram matrix).
LassoFit fit_lasso_folds(std::span<const NormalAccumulator> folds, const LassoOptions& opts = {});

/// Cross-validated Lasso on materialized rows; rows are assigned to folds by a seeded shuffle.
LassoFit fit_lasso(const LagMatrix& rows, const LassoOptions& opts = {});

/// Lasso at a single penalty on the full accumulator (no CV).
LinearModel lasso_at(const NormalAccumulator& acc, double lambda, const LassoOptions& opts = {});

/// Plain-text coefficients, one per line, intercept first.
void write_linear_model(std::ostream& out, const LinearModel& model);
LinearModel read_linear_model(std::istream& in);

}  // namespace tdcast
