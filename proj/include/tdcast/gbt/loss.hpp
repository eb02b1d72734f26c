#pragma once

#include <span>
#include <string>
#include <string_view>

namespace tdcast::gbt {

enum class LossKind { L2, L1, Huber, Poisson, Tweedie, Pinball, NegBin };
enum class Link { Identity, Log };

/// Second-order losses whose Hessian vanishes get this floor.
inline constexpr double kHessianFloor = 1e-6;

struct LossSpec {
    LossKind kind = LossKind::L2;
    double huber_delta = 1.0;
    double tweedie_power = 1.5;  // in (1, 2)
    double quantile = 0.5;       // pinball level u in (0, 1)
    double nb_r = 1.0;           // negative-binomial dispersion, > 0

    static LossSpec l2() { return {}; }
    static LossSpec l1() { return {.kind = LossKind::L1}; }
    static LossSpec huber(double delta = 1.0) { return {.kind = LossKind::Huber, .huber_delta = delta}; }
    static LossSpec poisson() { return {.kind = LossKind::Poisson}; }
    static LossSpec tweedie(double power = 1.5) { return {.kind = LossKind::Tweedie, .tweedie_power = power}; }
    static LossSpec pinball(double u) { return {.kind = LossKind::Pinball, .quantile = u}; }
    static LossSpec negbin(double r) { return {.kind = LossKind::NegBin, .nb_r = r}; }

    [[nodiscard]] Link link() const noexcept {
        return kind == LossKind::Poisson || kind == LossKind::Tweedie || kind == LossKind::NegBin ? Link::Log
                                                                                                   : Link::Identity;
    }
    /// L1, Huber and Pinball: leaf values are refit on residuals rather than taken from -G/H.
    [[nodiscard]] bool floored_hessian() const noexcept {
        return kind == LossKind::L1 || kind == LossKind::Huber || kind == LossKind::Pinball;
    }

    void validate() const;
};

std::string to_string(const LossSpec& loss);
LossSpec parse_loss(std::string_view text);

struct GradHess {
    double g = 0.0;
    double h = 0.0;
};

/// Derivatives of the per-sample loss with respect to the raw score f (x is the target).
GradHess loss_grad_hess(const LossSpec& loss, double x, double f);

/// Per-sample loss at raw score f, up to terms that do not depend on f
/// (except NegBin, which is the complete negative log likelihood).
double loss_value(const LossSpec& loss, double x, double f);

/// Mean-scale prediction for raw score f.
double inverse_link(const LossSpec& loss, double f);

/// Negative-binomial NLL of one count x at log-mean f with dispersion r, evaluated in log space.
double nb_nll_point(double x, double f, double r);

/// Sum of nb_nll_point over paired samples.
double nb_nll(std::span<const double> x, std::span<const double> f, double r);

}  // namespace tdcast::gbt
