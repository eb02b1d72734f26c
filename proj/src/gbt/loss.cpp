#include "tdcast/gbt/loss.hpp"

#include "tdcast/errors.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace tdcast::gbt {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// lnΓ(r + x) - lnΓ(r) for integer-valued x >= 0.
double log_rising(double r, double x) {
    if (x <= 64.0 && x == std::floor(x)) {
        double s = 0.0;
        for (double k = 0.0; k < x; k += 1.0) s += std::log(r + k);
        return s;
    }
    return std::lgamma(r + x) - std::lgamma(r);
}

void require_finite(double f) {
    if (!std::isfinite(f)) throw NumericalError("non-finite raw score");
}

}  // namespace

void LossSpec::validate() const {
    switch (kind) {
        case LossKind::Huber:
            if (!(huber_delta > 0.0)) throw ConfigError("huber delta must be > 0");
            break;
        case LossKind::Tweedie:
            if (!(tweedie_power > 1.0 && tweedie_power < 2.0)) throw ConfigError("tweedie power must be in (1, 2)");
            break;
        case LossKind::Pinball:
            if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("pinball level must be in (0, 1)");
            break;
        case LossKind::NegBin:
            if (!(nb_r > 0.0) || !std::isfinite(nb_r)) throw ConfigError("negative-binomial r must be > 0");
            break;
        default:
            break;
    }
}

std::string to_string(const LossSpec& loss) {
    std::ostringstream os;
    os.precision(17);
    switch (loss.kind) {
        case LossKind::L2: return "l2";
        case LossKind::L1: return "l1";
        case LossKind::Poisson: return "poisson";
        case LossKind::Huber: os << "huber:" << loss.huber_delta; break;
        case LossKind::Tweedie: os << "tweedie:" << loss.tweedie_power; break;
        case LossKind::Pinball: os << "pinball:" << loss.quantile; break;
        case LossKind::NegBin: os << "negbin:" << loss.nb_r; break;
    }
    return os.str();
}

LossSpec parse_loss(std::string_view text) {
    const auto colon = text.find(':');
    const auto name = text.substr(0, colon);
    std::optional<double> arg;
    if (colon != std::string_view::npos) {
        try {
            arg = std::stod(std::string(text.substr(colon + 1)));
        } catch (const std::exception&) {
            throw ConfigError("bad loss parameter in '" + std::string(text) + "'");
        }
    }
    LossSpec loss;
    if (name == "l2") {
        loss = LossSpec::l2();
    } else if (name == "l1") {
        loss = LossSpec::l1();
    } else if (name == "poisson") {
        loss = LossSpec::poisson();
    } else if (name == "huber") {
        loss = LossSpec::huber(arg.value_or(1.0));
    } else if (name == "tweedie") {
        loss = LossSpec::tweedie(arg.value_or(1.5));
    } else if (name == "pinball" || name == "quantile") {
        loss = LossSpec::pinball(arg.value_or(0.5));
    } else if (name == "negbin") {
        loss = LossSpec::negbin(arg.value_or(1.0));
    } else {
        throw ConfigError("unknown loss '" + std::string(text) + "'");
    }
    loss.validate();
    return loss;
}

double nb_nll_point(double x, double f, double r) {
    if (!(r > 0.0)) throw NumericalError("negative-binomial r must be > 0");
    require_finite(f);
    const double log_r = std::log(r);
    // r*log((e^f + r)/r) + x*log((e^f + r)/e^f), both via softplus.
    const double value = -log_rising(r, x) + std::lgamma(x + 1.0) + r * softplus(f - log_r) +
                         x * softplus(log_r - f);
    if (!std::isfinite(value)) throw NumericalError("non-finite negative-binomial likelihood");
    return value;
}

double nb_nll(std::span<const double> x, std::span<const double> f, double r) {
    if (x.size() != f.size()) throw DataError("nb_nll: length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) total += nb_nll_point(x[i], f[i], r);
    return total;
}

GradHess loss_grad_hess(const LossSpec& loss, double x, double f) {
    require_finite(f);
    switch (loss.kind) {
        case LossKind::L2:
            return {f - x, 1.0};
        case LossKind::L1:
            return {f > x ? 1.0 : (f < x ? -1.0 : 0.0), kHessianFloor};
        case LossKind::Huber: {
            const double r = f - x;
            if (std::abs(r) <= loss.huber_delta) return {r, 1.0};
            return {std::copysign(loss.huber_delta, r), kHessianFloor};
        }
        case LossKind::Pinball:
            return {f < x ? -loss.quantile : 1.0 - loss.quantile, kHessianFloor};
        case LossKind::Poisson: {
            const double mu = std::exp(f);
            return {mu - x, std::max(mu, kHessianFloor * 1e-6)};
        }
        case LossKind::Tweedie: {
            const double rho = loss.tweedie_power;
            const double a = std::exp((1.0 - rho) * f);
            const double b = std::exp((2.0 - rho) * f);
            return {-x * a + b, -(1.0 - rho) * x * a + (2.0 - rho) * b};
        }
        case LossKind::NegBin: {
            const double r = loss.nb_r;
            if (!(r > 0.0)) throw NumericalError("negative-binomial r must be > 0");
            // mu/(mu + r) = sigmoid(f - ln r), computed without overflow.
            const double z = f - std::log(r);
            const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            const double g = s * (r + x) - x;
            const double h = (r + x) * s * (1.0 - s);
            return {g, h};
        }
    }
    return {};
}

double loss_value(const LossSpec& loss, double x, double f) {
    require_finite(f);
    switch (loss.kind) {
        case LossKind::L2:
            return 0.5 * (f - x) * (f - x);
        case LossKind::L1:
            return std::abs(f - x);
        case LossKind::Huber: {
            const double r = std::abs(f - x);
            return r <= loss.huber_delta ? 0.5 * r * r : loss.huber_delta * (r - 0.5 * loss.huber_delta);
        }
        case LossKind::Pinball:
            return x >= f ? loss.quantile * (x - f) : (1.0 - loss.quantile) * (f - x);
        case LossKind::Poisson:
            return std::exp(f) - x * f;
        case LossKind::Tweedie: {
            const double rho = loss.tweedie_power;
            return -x * std::exp((1.0 - rho) * f) / (1.0 - rho) + std::exp((2.0 - rho) * f) / (2.0 - rho);
        }
        case LossKind::NegBin:
            return nb_nll_point(x, f, loss.nb_r);
    }
    return 0.0;
}

double inverse_link(const LossSpec& loss, double f) { return loss.link() == Link::Log ? std::exp(f) : f; }

}  // namespace tdcast::gbt
