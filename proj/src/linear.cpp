#include "tdcast/linear.hpp"

#include "tdcast/errors.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

namespace tdcast {

namespace {

constexpr std::size_t kBlockRows = 256;
constexpr std::size_t kStreamChunks = 64;

bool all_finite(const NormalAccumulator& acc) {
    return acc.xtx().allFinite() && acc.xty().allFinite() && std::isfinite(acc.yty());
}

// Emits the lag rows of one series in blocks, mirroring embed().
template <typename Sink>
void stream_series_rows(const SalesSeries& series, std::size_t train_end, std::size_t p, PadPolicy pad,
                        Eigen::MatrixXd& block, Eigen::VectorXd& targets, Sink&& sink) {
    const auto history = training_values(series, train_end);
    const std::size_t first = pad == PadPolicy::Drop ? p : 0;
    std::size_t filled = 0;
    std::vector<double> window(p);
    for (std::size_t t = first; t < history.size(); ++t) {
        lag_window(history, t, window);
        block.row(static_cast<Eigen::Index>(filled)) = Eigen::Map<const Eigen::RowVectorXd>(window.data(),
                                                                                           static_cast<Eigen::Index>(p));
        targets(static_cast<Eigen::Index>(filled)) = history[t];
        sink(t, filled);
        if (++filled == kBlockRows) {
            sink.flush(filled);
            filled = 0;
        }
    }
    if (filled > 0) sink.flush(filled);
}

}  // namespace

NormalAccumulator::NormalAccumulator(std::size_t n_features)
    : n_features_(n_features),
      xtx_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_features + 1), static_cast<Eigen::Index>(n_features + 1))),
      xty_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_features + 1))) {}

void NormalAccumulator::add_row(std::span<const double> x, double y) {
    if (x.size() != n_features_) throw DataError("row has " + std::to_string(x.size()) + " features, expected " +
                                                 std::to_string(n_features_));
    Eigen::MatrixXd row(1, static_cast<Eigen::Index>(n_features_));
    row.row(0) = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXd target(1);
    target(0) = y;
    add_rows(row, target);
}

void NormalAccumulator::add_rows(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (static_cast<std::size_t>(x.cols()) != n_features_ || x.rows() != y.size()) {
        throw DataError("row block dimension mismatch");
    }
    const Eigen::Index n = x.rows();
    if (n == 0) return;
    Eigen::MatrixXd aug(n, x.cols() + 1);
    aug.col(0).setOnes();
    aug.rightCols(x.cols()) = x;
    xtx_.selfadjointView<Eigen::Lower>().rankUpdate(aug.transpose());
    xtx_.triangularView<Eigen::StrictlyUpper>() = xtx_.transpose();
    xty_.noalias() += aug.transpose() * y;
    yty_ += y.squaredNorm();
    n_rows_ += static_cast<std::uint64_t>(n);
}

void NormalAccumulator::merge(const NormalAccumulator& other) {
    if (other.n_features_ != n_features_) throw DataError("cannot merge accumulators of different width");
    xtx_ += other.xtx_;
    xty_ += other.xty_;
    yty_ += other.yty_;
    n_rows_ += other.n_rows_;
}

void NormalAccumulator::subtract(const NormalAccumulator& other) {
    if (other.n_features_ != n_features_ || other.n_rows_ > n_rows_) {
        throw DataError("cannot subtract incompatible accumulator");
    }
    xtx_ -= other.xtx_;
    xty_ -= other.xty_;
    yty_ -= other.yty_;
    n_rows_ -= other.n_rows_;
}

NormalAccumulator accumulate(const LagMatrix& matrix) {
    const std::size_t p = matrix.n_lags;
    NormalAccumulator acc(p);
    if (matrix.features.size() != matrix.rows() * p) throw DataError("lag matrix dimension mismatch");
    for (std::size_t start = 0; start < matrix.rows(); start += kBlockRows) {
        const std::size_t n = std::min(kBlockRows, matrix.rows() - start);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
            matrix.features.data() + start * p, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
        Eigen::Map<const Eigen::VectorXd> y(matrix.targets.data() + start, static_cast<Eigen::Index>(n));
        acc.add_rows(x, y);
    }
    return acc;
}

std::size_t row_fold(std::uint64_t series_key, std::uint64_t time, std::size_t n_folds, std::uint64_t seed) {
    // splitmix64 finalizer over the combined key
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (series_key + 1) + time * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<std::size_t>(z % n_folds);
}

std::vector<NormalAccumulator> accumulate_series_folds(std::span<const SalesSeries> series, std::size_t train_end,
                                                       int n_lags, PadPolicy pad, std::size_t n_folds,
                                                       std::uint64_t seed) {
    if (n_lags <= 0) throw ConfigError("n_lags must be >= 1");
    if (n_folds == 0) throw ConfigError("need at least one fold");
    const auto p = static_cast<std::size_t>(n_lags);
    const std::size_t chunks = std::min(kStreamChunks, std::max<std::size_t>(series.size(), 1));
    std::vector<std::vector<NormalAccumulator>> partial(chunks, std::vector<NormalAccumulator>(n_folds, NormalAccumulator(p)));

    // Fixed chunking keeps the floating-point reduction order independent of the thread count.
    tbb::parallel_for(std::size_t{0}, chunks, [&](std::size_t c) {
        const std::size_t lo = series.size() * c / chunks;
        const std::size_t hi = series.size() * (c + 1) / chunks;
        Eigen::MatrixXd block(static_cast<Eigen::Index>(kBlockRows), static_cast<Eigen::Index>(p));
        Eigen::VectorXd targets(static_cast<Eigen::Index>(kBlockRows));
        auto& accs = partial[c];
        for (std::size_t i = lo; i < hi; ++i) {
            if (n_folds == 1) {
                struct Sink {
                    NormalAccumulator& acc;
                    Eigen::MatrixXd& block;
                    Eigen::VectorXd& targets;
                    void operator()(std::size_t, std::size_t) {}
                    void flush(std::size_t n) {
                        acc.add_rows(block.topRows(static_cast<Eigen::Index>(n)), targets.head(static_cast<Eigen::Index>(n)));
                    }
                } sink{accs[0], block, targets};
                stream_series_rows(series[i], train_end, p, pad, block, targets, sink);
            } else {
                // Rows go one at a time into their fold; the block is only scratch space.
                struct Sink {
                    std::vector<NormalAccumulator>& accs;
                    Eigen::MatrixXd& block;
                    Eigen::VectorXd& targets;
                    std::vector<std::size_t> fold_of;
                    std::uint64_t key, seed;
                    std::size_t n_folds;
                    void operator()(std::size_t t, std::size_t slot) {
                        if (fold_of.size() <= slot) fold_of.resize(slot + 1);
                        fold_of[slot] = row_fold(key, t, n_folds, seed);
                    }
                    void flush(std::size_t n) {
                        for (std::size_t f = 0; f < n_folds; ++f) {
                            std::vector<Eigen::Index> rows;
                            for (std::size_t r = 0; r < n; ++r) {
                                if (fold_of[r] == f) rows.push_back(static_cast<Eigen::Index>(r));
                            }
                            if (rows.empty()) continue;
                            accs[f].add_rows(block(rows, Eigen::all), targets(rows));
                        }
                    }
                } sink{accs, block, targets, {}, i, seed, n_folds};
                stream_series_rows(series[i], train_end, p, pad, block, targets, sink);
            }
        }
    });

    std::vector<NormalAccumulator> out(n_folds, NormalAccumulator(p));
    for (const auto& chunk : partial) {
        for (std::size_t f = 0; f < n_folds; ++f) out[f].merge(chunk[f]);
    }
    return out;
}

NormalAccumulator accumulate_series(std::span<const SalesSeries> series, std::size_t train_end, int n_lags,
                                    PadPolicy pad) {
    return std::move(accumulate_series_folds(series, train_end, n_lags, pad, 1, 0).front());
}

LinearModel::LinearModel(Eigen::VectorXd beta, Regularization reg, double lambda)
    : beta_(std::move(beta)), reg_(reg), lambda_(lambda) {
    if (beta_.size() < 1) throw DataError("linear model needs an intercept");
    if (!beta_.allFinite()) throw NumericalError("linear model has non-finite coefficients");
}

double LinearModel::predict(std::span<const double> lags) const {
    if (lags.size() + 1 != static_cast<std::size_t>(beta_.size())) {
        throw DataError("linear model expects " + std::to_string(beta_.size() - 1) + " lags");
    }
    return beta_(0) + beta_.tail(beta_.size() - 1).dot(
                          Eigen::Map<const Eigen::VectorXd>(lags.data(), static_cast<Eigen::Index>(lags.size())));
}

LinearModel solve_ols(const NormalAccumulator& acc, std::optional<double> ridge_eps) {
    if (acc.n_rows() == 0) throw DataError("no rows to fit");
    if (!all_finite(acc)) throw NumericalError("non-finite normal equations");
    const Eigen::Index d = acc.xtx().rows();
    double eps = ridge_eps.value_or(1e-12 * acc.xtx().trace() / static_cast<double>(d));
    if (eps < 0.0) throw ConfigError("ridge_eps must be >= 0");

    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::MatrixXd a = acc.xtx();
        a.diagonal().tail(d - 1).array() += eps;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd beta = ldlt.solve(acc.xty());
            if (beta.allFinite() && (a * beta - acc.xty()).norm() <= 1e-8 * (a.norm() * beta.norm() + acc.xty().norm()) + 1e-300) {
                return LinearModel(std::move(beta), Regularization::None);
            }
        }
        eps = eps > 0.0 ? eps * 100.0 : 1e-10 * (acc.xtx().trace() / static_cast<double>(d) + 1.0);
    }
    throw NumericalError("singular normal equations");
}

namespace {

// Standardized least-squares problem derived from an accumulator.
struct StdProblem {
    Eigen::MatrixXd gram;   // correlation-scale Gram matrix of the features
    Eigen::VectorXd xy;     // standardized feature/target covariance
    Eigen::VectorXd mean;   // feature means
    Eigen::VectorXd scale;  // feature standard deviations (0 = constant feature)
    double ybar = 0.0;
};

StdProblem standardize(const NormalAccumulator& acc) {
    if (acc.n_rows() == 0) throw DataError("no rows to fit");
    if (!all_finite(acc)) throw NumericalError("non-finite inputs to lasso");
    const auto p = static_cast<Eigen::Index>(acc.n_features());
    const double n = static_cast<double>(acc.n_rows());
    StdProblem sp;
    sp.mean = acc.xtx().row(0).tail(p).transpose() / n;
    sp.ybar = acc.xty()(0) / n;
    Eigen::MatrixXd cov = acc.xtx().bottomRightCorner(p, p) / n - sp.mean * sp.mean.transpose();
    Eigen::VectorXd cxy = acc.xty().tail(p) / n - sp.mean * sp.ybar;
    sp.scale = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    const double tiny = 1e-12 * std::max(1.0, sp.scale.maxCoeff());
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (sp.scale(j) > tiny) {
            inv(j) = 1.0 / sp.scale(j);
        } else {
            sp.scale(j) = 0.0;
        }
    }
    sp.gram = inv.asDiagonal() * cov * inv.asDiagonal();
    sp.xy = inv.cwiseProduct(cxy);
    return sp;
}

double lambda_max(const StdProblem& sp) { return sp.xy.size() == 0 ? 0.0 : sp.xy.cwiseAbs().maxCoeff(); }

// Coordinate descent down a descending lambda path with warm starts.
// Returns original-scale coefficient vectors (intercept first), one per lambda.
std::vector<Eigen::VectorXd> lasso_path(const StdProblem& sp, const std::vector<double>& lambdas,
                                        const LassoOptions& opts) {
    const Eigen::Index p = sp.xy.size();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd grad = sp.xy;  // xy - gram * beta
    std::vector<Eigen::VectorXd> out;
    out.reserve(lambdas.size());
    for (const double lambda : lambdas) {
        for (std::size_t sweep = 0; sweep < opts.max_sweeps; ++sweep) {
            double max_change = 0.0;
            for (Eigen::Index j = 0; j < p; ++j) {
                const double gjj = sp.gram(j, j);
                if (gjj <= 0.0) continue;
                const double z = grad(j) + gjj * beta(j);
                const double updated = std::copysign(std::max(std::abs(z) - lambda, 0.0), z) / gjj;
                const double delta = updated - beta(j);
                if (delta != 0.0) {
                    grad.noalias() -= sp.gram.col(j) * delta;
                    beta(j) = updated;
                    max_change = std::max(max_change, std::abs(delta) * std::sqrt(gjj));
                }
            }
            if (max_change < opts.tol) break;
        }
        Eigen::VectorXd coef(p + 1);
        for (Eigen::Index j = 0; j < p; ++j) coef(j + 1) = sp.scale(j) > 0.0 ? beta(j) / sp.scale(j) : 0.0;
        coef(0) = sp.ybar - coef.tail(p).dot(sp.mean);
        out.push_back(std::move(coef));
    }
    return out;
}

std::vector<double> make_grid(const StdProblem& sp, const LassoOptions& opts) {
    std::vector<double> grid = opts.lambda_grid;
    if (grid.empty()) {
        const double top = lambda_max(sp);
        if (top <= 0.0) return {0.0};
        const std::size_t n = std::max<std::size_t>(opts.n_lambda, 1);
        for (std::size_t k = 0; k < n; ++k) {
            const double frac = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
            grid.push_back(top * std::pow(opts.lambda_min_ratio, frac));
        }
    }
    for (double l : grid) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lasso penalties must be finite and >= 0");
    }
    std::sort(grid.begin(), grid.end(), std::greater<>());
    return grid;
}

double sse(const NormalAccumulator& acc, const Eigen::VectorXd& coef) {
    return acc.yty() - 2.0 * coef.dot(acc.xty()) + coef.dot(acc.xtx() * coef);
}

}  // namespace

LinearModel lasso_at(const NormalAccumulator& acc, double lambda, const LassoOptions& opts) {
    const auto sp = standardize(acc);
    auto path = lasso_path(sp, {lambda}, opts);
    return LinearModel(std::move(path.front()), Regularization::Lasso, lambda);
}

LassoFit fit_lasso_folds(std::span<const NormalAccumulator> folds, const LassoOptions& opts) {
    if (folds.empty()) throw ConfigError("lasso needs at least one fold");
    NormalAccumulator total(folds.front().n_features());
    for (const auto& f : folds) total.merge(f);
    const auto full = standardize(total);

    LassoFit fit;
    fit.lambdas = make_grid(full, opts);
    fit.cv_mse.assign(fit.lambdas.size(), 0.0);

    if (fit.lambdas.size() > 1) {
        if (folds.size() < 2) throw ConfigError("cross-validation needs at least two folds");
        std::vector<double> sse_sum(fit.lambdas.size(), 0.0);
        double n_sum = 0.0;
        for (const auto& held_out : folds) {
            if (held_out.n_rows() == 0) continue;
            NormalAccumulator train = total;
            train.subtract(held_out);
            if (train.n_rows() == 0) continue;
            const auto path = lasso_path(standardize(train), fit.lambdas, opts);
            for (std::size_t k = 0; k < path.size(); ++k) sse_sum[k] += sse(held_out, path[k]);
            n_sum += static_cast<double>(held_out.n_rows());
        }
        for (std::size_t k = 0; k < fit.lambdas.size(); ++k) fit.cv_mse[k] = sse_sum[k] / n_sum;
        fit.best = static_cast<std::size_t>(
            std::min_element(fit.cv_mse.begin(), fit.cv_mse.end()) - fit.cv_mse.begin());
    }

    const std::vector<double> to_best(fit.lambdas.begin(), fit.lambdas.begin() + static_cast<std::ptrdiff_t>(fit.best) + 1);
    auto path = lasso_path(full, to_best, opts);
    fit.model = LinearModel(std::move(path.back()), Regularization::Lasso, fit.lambdas[fit.best]);
    return fit;
}

LassoFit fit_lasso(const LagMatrix& rows, const LassoOptions& opts) {
    const std::size_t k = std::max<std::size_t>(opts.cv_folds, 1);
    if (rows.rows() < k) throw DataError("lasso needs at least cv_folds rows");
    for (double v : rows.features) {
        if (!std::isfinite(v)) throw NumericalError("non-finite inputs to lasso");
    }
    std::vector<std::size_t> order(rows.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(opts.seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold_of(rows.rows());
    for (std::size_t pos = 0; pos < order.size(); ++pos) fold_of[order[pos]] = pos % k;

    std::vector<NormalAccumulator> folds(k, NormalAccumulator(rows.n_lags));
    for (std::size_t r = 0; r < rows.rows(); ++r) folds[fold_of[r]].add_row(rows.row(r), rows.targets[r]);
    return fit_lasso_folds(folds, opts);
}

void write_linear_model(std::ostream& out, const LinearModel& model) {
    const auto precision = out.precision(17);
    for (Eigen::Index j = 0; j < model.beta().size(); ++j) out << model.beta()(j) << '\n';
    out.precision(precision);
}

LinearModel read_linear_model(std::istream& in) {
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        try {
            std::size_t used = 0;
            values.push_back(std::stod(line, &used));
        } catch (const std::exception&) {
            throw DataError("malformed coefficient line '" + line + "'");
        }
    }
    if (values.empty()) throw DataError("empty coefficient file");
    return LinearModel(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())),
                       Regularization::None);
}

}  // namespace tdcast
