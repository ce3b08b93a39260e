#include <slaq/predictor.hpp>

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace slaq {

double ExponentialFit::evaluate(double k) const noexcept { return std::pow(mu, k - b) + c; }

CurveFamily family_of(const CurveParams& params) noexcept {
    return std::holds_alternative<SublinearFit>(params) ? CurveFamily::Sublinear
                                                        : CurveFamily::Exponential;
}

double evaluate(const CurveParams& params, double k) noexcept {
    return std::visit([k](const auto& p) { return p.evaluate(k); }, params);
}

double asymptote_of(const CurveParams& params) noexcept {
    return std::visit([](const auto& p) { return p.asymptote(); }, params);
}

void FitConfig::validate() const {
    if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("fit decay must be in (0, 1]");
    if (min_history < 4) throw std::invalid_argument("fit min_history must be >= 4");
    if (max_refine_steps < 0) throw std::invalid_argument("fit max_refine_steps must be >= 0");
    if (!(refine_tolerance >= 0.0)) throw std::invalid_argument("fit refine_tolerance must be >= 0");
}

namespace {

constexpr double kMuMin = 1e-6;
constexpr double kMuMax = 1.0 - 1e-9;

struct Samples {
    std::vector<double> k;
    std::vector<double> y;
    std::vector<double> w;
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return k.size(); }
    [[nodiscard]] double range() const noexcept { return hi - lo; }
};

std::vector<double> weights_for(std::span<const LossRecord> records, double decay) {
    std::vector<double> w(records.size());
    const auto latest = static_cast<double>(records.back().iteration);
    for (std::size_t i = 0; i < records.size(); ++i) {
        w[i] = std::pow(decay, latest - static_cast<double>(records[i].iteration));
    }
    return w;
}

Samples collect(std::span<const LossRecord> records, const FitConfig& cfg) {
    cfg.validate();
    if (records.size() < cfg.min_history) throw FitError("insufficient history");
    Samples s;
    s.k.reserve(records.size());
    s.y.reserve(records.size());
    for (const auto& r : records) {
        if (!std::isfinite(r.loss)) throw FitError("degenerate history");
        s.k.push_back(static_cast<double>(r.iteration));
        s.y.push_back(r.loss);
    }
    s.w = weights_for(records, cfg.decay);
    const auto [lo, hi] = std::minmax_element(s.y.begin(), s.y.end());
    s.lo = *lo;
    s.hi = *hi;
    if (!(s.hi > s.lo)) throw FitError("degenerate history");
    return s;
}

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;

template <int N>
using Mat = Eigen::Matrix<double, N, N>;

// Damped Gauss-Newton over box constraints. `model(k, theta, grad)` returns the
// curve value and, when `grad` is non-null, its parameter gradient. Parameters
// sitting on a bound whose step points outward are held
// fixed for the step.
template <int N, class Model>
Vec<N> refine(Vec<N> theta, const Samples& s, const Vec<N>& lower, const Vec<N>& upper,
              const FitConfig& cfg, Model model) {
    auto cost_of = [&](const Vec<N>& t) {
        double cost = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double r = model(s.k[i], t, nullptr) - s.y[i];
            cost += s.w[i] * r * r;
        }
        return cost;
    };

    double cost = cost_of(theta);
    double damping = 1e-3;
    for (int step = 0; step < cfg.max_refine_steps && cost > 0.0; ++step) {
        Mat<N> jtj = Mat<N>::Zero();
        Vec<N> grad = Vec<N>::Zero();
        Vec<N> row;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double r = model(s.k[i], theta, &row) - s.y[i];
            jtj.noalias() += s.w[i] * row * row.transpose();
            grad.noalias() += s.w[i] * r * row;
        }

        Mat<N> damped = jtj;
        for (int j = 0; j < N; ++j) damped(j, j) += damping * jtj(j, j) + std::numeric_limits<double>::min();
        std::array<bool, N> pinned{};
        Vec<N> delta;
        for (int pass = 0; pass <= N; ++pass) {
            Mat<N> lhs = damped;
            Vec<N> rhs = -grad;
            for (int j = 0; j < N; ++j) {
                if (!pinned[j]) continue;
                lhs.row(j).setZero();
                lhs.col(j).setZero();
                lhs(j, j) = 1.0;
                rhs[j] = 0.0;
            }
            delta = lhs.ldlt().solve(rhs);
            bool grew = false;
            for (int j = 0; j < N; ++j) {
                const bool outward = (theta[j] <= lower[j] && delta[j] < 0.0) ||
                                     (theta[j] >= upper[j] && delta[j] > 0.0);
                if (outward && !pinned[j]) pinned[j] = grew = true;
            }
            if (!grew) break;
        }

        const Vec<N> candidate = (theta + delta).cwiseMax(lower).cwiseMin(upper);
        const double candidate_cost = cost_of(candidate);
        if (std::isfinite(candidate_cost) && candidate_cost < cost) {
            const bool settled =
                ((candidate - theta).array().abs() <= cfg.refine_tolerance * theta.array().abs())
                    .all();
            theta = candidate;
            cost = candidate_cost;
            damping = std::max(damping / 10.0, 1e-15);
            if (settled) break;
        } else {
            damping *= 10.0;
            if (damping > 1e16) break;
        }
    }
    return theta;
}

double sublinear_model(double k, const Vec<4>& t, Vec<4>* grad) {
    const double denom = (t[0] * k + t[1]) * k + t[2];
    if (grad) {
        const double inv2 = 1.0 / (denom * denom);
        *grad << -k * k * inv2, -k * inv2, -inv2, 1.0;
    }
    return 1.0 / denom + t[3];
}

double exponential_model(double k, const Vec<3>& t, Vec<3>* grad) {
    const double power = std::pow(t[0], k - t[1]);
    if (grad) {
        *grad << (k - t[1]) * power / t[0], -std::log(t[0]) * power, 1.0;
    }
    return power + t[2];
}

template <class Params>
void require_finite(const Params& values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw FitError("fit infeasible");
    }
}

double weighted_rms(const CurveParams& params, const Samples& s) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double r = evaluate(params, s.k[i]) - s.y[i];
        num += s.w[i] * r * r;
        den += s.w[i];
    }
    return std::sqrt(num / den);
}

template <int N, class Model>
double weighted_cost(const Vec<N>& theta, const Samples& s, Model model) {
    double cost = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double r = model(s.k[i], theta, nullptr) - s.y[i];
        cost += s.w[i] * r * r;
    }
    return cost;
}

double median(std::vector<double> values) {
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(values.begin(),
                                         values.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

// Asymptote guess of the closed-form starts: 10% of the range below the lowest loss.
constexpr double kRecipeOffset = 0.1;

// Returns the cheapest start among `recipe` and the closed-form fits
// `make(asymptote)`, with asymptotes searched below the lowest observed loss
// at offsets log-spaced in units of the observed range. On noiseless data the
// closed form is exact at the true asymptote, so the search lands in its basin
// where a single start can stall on a bound.
template <int N, class Make, class Model>
Vec<N> best_start(const Samples& s, const Vec<N>& lower, const Vec<N>& upper, const Vec<N>& recipe, Make make,
                  Model model) {
    constexpr int kGrid = 61;
    constexpr double kLogLo = -10.0;
    constexpr double kLogHi = 2.0;
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto scored = [&](const Vec<N>& raw) {
        const Vec<N> theta = raw.cwiseMax(lower).cwiseMin(upper);
        const double cost = theta.allFinite() ? weighted_cost<N>(theta, s, model) : inf;
        return std::pair{std::isfinite(cost) ? cost : inf, theta};
    };
    const auto candidate = [&](double log_offset) {
        return scored(make(s.lo - std::pow(10.0, log_offset) * s.range()));
    };

    const double step = (kLogHi - kLogLo) / (kGrid - 1);
    int grid_i = 0;
    auto grid = candidate(kLogLo);
    for (int i = 1; i < kGrid; ++i) {
        auto c = candidate(kLogLo + i * step);
        if (c.first < grid.first) {
            grid = std::move(c);
            grid_i = i;
        }
    }

    // Golden-section search around the best grid point.
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = kLogLo + std::max(grid_i - 1, 0) * step;
    double hi = kLogLo + std::min(grid_i + 1, kGrid - 1) * step;
    double x1 = hi - ratio * (hi - lo);
    double x2 = lo + ratio * (hi - lo);
    auto f1 = candidate(x1);
    auto f2 = candidate(x2);
    for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
        if (f1.first < f2.first) {
            hi = x2;
            x2 = x1;
            f2 = std::move(f1);
            x1 = hi - ratio * (hi - lo);
            f1 = candidate(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = std::move(f2);
            x2 = lo + ratio * (hi - lo);
            f2 = candidate(x2);
        }
    }

    auto best = scored(recipe);
    for (auto* c : {&grid, &f1, &f2}) {
        if (c->first < best.first) best = std::move(*c);
    }
    if (!std::isfinite(best.first)) throw FitError("fit infeasible");
    return best.second;
}

SublinearFit fit_sublinear_samples(const Samples& s, const FitConfig& cfg) {
    const double c_min = 1e-12 / s.range();
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Vec<4> lower(0.0, 0.0, c_min, -inf);
    const Vec<4> upper(inf, inf, inf, inf);

    // Closed form for a given asymptote d: 1 / (y - d) is quadratic in k. With
    // `reweight`, the weights gain (y - d)^4, which maps residuals in
    // 1 / (y - d) back to loss units.
    const auto closed_form = [&](double d, bool reweight) {
        Mat<3> ata = Mat<3>::Zero();
        Vec<3> atz = Vec<3>::Zero();
        for (std::size_t i = 0; i < s.size(); ++i) {
            Vec<3> row(s.k[i] * s.k[i], s.k[i], 1.0);
            const double gap = s.y[i] - d;
            const double z = 1.0 / gap;
            const double w = reweight ? s.w[i] * gap * gap * gap * gap : s.w[i];
            ata.noalias() += w * row * row.transpose();
            atz.noalias() += w * z * row;
        }
        const Vec<3> quad = ata.ldlt().solve(atz);
        Vec<4> theta(quad[0], quad[1], quad[2], d);
        if (!theta.allFinite()) theta << 0.0, 1.0 / s.range(), 1.0 / (s.hi - d), d;
        return theta;
    };

    const Vec<4> recipe = closed_form(s.lo - kRecipeOffset * s.range(), false);
    Vec<4> theta = best_start<4>(s, lower, upper, recipe, [&](double d) { return closed_form(d, true); },
                                 sublinear_model);
    theta = refine<4>(theta, s, lower, upper, cfg, sublinear_model);
    const SublinearFit fit{theta[0], theta[1], theta[2], theta[3]};
    require_finite(std::array{fit.a, fit.b, fit.c, fit.d});
    if (!(fit.c > 0.0) || fit.a < 0.0 || fit.b < 0.0) throw FitError("fit infeasible");
    return fit;
}

ExponentialFit fit_exponential_samples(const Samples& s, const FitConfig& cfg) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Vec<3> lower(kMuMin, -inf, -inf);
    const Vec<3> upper(kMuMax, inf, inf);

    // Intercept b for a fixed rate: weighted mean of k - log(y - c) / log(mu).
    const auto intercept = [&](double mu, double c) {
        const double log_mu = std::log(mu);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            num += s.w[i] * (s.k[i] - std::log(s.y[i] - c) / log_mu);
            den += s.w[i];
        }
        return num / den;
    };

    // Rate from the median ratio of consecutive deltas.
    std::vector<double> ratios;
    for (std::size_t i = 0; i + 2 < s.size(); ++i) {
        if (s.k[i + 1] != s.k[i] + 1.0 || s.k[i + 2] != s.k[i] + 2.0) continue;
        const double first = s.y[i] - s.y[i + 1];
        if (first == 0.0) continue;
        const double ratio = (s.y[i + 1] - s.y[i + 2]) / first;
        if (std::isfinite(ratio)) ratios.push_back(ratio);
    }
    const double mu0 = ratios.empty() ? 0.5 : std::clamp(median(ratios), 0.01, 0.99);
    const double c0 = s.lo - kRecipeOffset * s.range();
    const Vec<3> recipe(mu0, intercept(mu0, c0), c0);

    // Closed form for a given asymptote c: log(y - c) is linear in k. The
    // weights (y - c)^2 map residuals in log(y - c) back to loss units.
    const auto closed_form = [&](double c) {
        double sw = 0.0, sk = 0.0, sz = 0.0, skk = 0.0, skz = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double gap = s.y[i] - c;
            const double z = std::log(gap);
            const double w = s.w[i] * gap * gap;
            sw += w;
            sk += w * s.k[i];
            sz += w * z;
            skk += w * s.k[i] * s.k[i];
            skz += w * s.k[i] * z;
        }
        const double slope = (sw * skz - sk * sz) / (sw * skk - sk * sk);
        const double mu = std::clamp(std::exp(slope), 0.01, 0.99);
        return Vec<3>(mu, (sk - sz / std::log(mu)) / sw, c);
    };

    Vec<3> theta = best_start<3>(s, lower, upper, recipe, closed_form, exponential_model);
    theta = refine<3>(theta, s, lower, upper, cfg, exponential_model);
    const ExponentialFit fit{theta[0], theta[1], theta[2]};
    require_finite(std::array{fit.mu, fit.b, fit.c});
    if (!(fit.mu > 0.0 && fit.mu < 1.0)) throw FitError("fit infeasible");
    return fit;
}

}  // namespace

SublinearFit fit_sublinear(std::span<const LossRecord> records, const FitConfig& cfg) {
    return fit_sublinear_samples(collect(records, cfg), cfg);
}

SublinearFit fit_sublinear(const LossHistory& history, const FitConfig& cfg) {
    return fit_sublinear(history.records(), cfg);
}

ExponentialFit fit_exponential(std::span<const LossRecord> records, const FitConfig& cfg) {
    return fit_exponential_samples(collect(records, cfg), cfg);
}

ExponentialFit fit_exponential(const LossHistory& history, const FitConfig& cfg) {
    return fit_exponential(history.records(), cfg);
}

double weighted_rms_residual(const CurveParams& params, std::span<const LossRecord> records,
                             const FitConfig& cfg) {
    if (records.empty()) throw std::invalid_argument("residual needs at least one record");
    Samples s;
    for (const auto& r : records) {
        s.k.push_back(static_cast<double>(r.iteration));
        s.y.push_back(r.loss);
    }
    s.w = weights_for(records, cfg.decay);
    return weighted_rms(params, s);
}

FittedModel select_model(std::span<const LossRecord> records, const FitConfig& cfg,
                         std::optional<CurveFamily> family_hint) {
    const Samples s = collect(records, cfg);

    auto make = [&](CurveParams params) {
        FittedModel m;
        m.family = family_of(params);
        m.params = params;
        m.weighted_rms_residual = weighted_rms(params, s);
        m.n_points = s.size();
        return m;
    };

    if (family_hint) {
        if (*family_hint == CurveFamily::Sublinear) return make(fit_sublinear_samples(s, cfg));
        return make(fit_exponential_samples(s, cfg));
    }

    std::optional<FittedModel> sub;
    std::optional<FittedModel> exp;
    try {
        sub = make(fit_sublinear_samples(s, cfg));
    } catch (const FitError&) {
    }
    try {
        exp = make(fit_exponential_samples(s, cfg));
    } catch (const FitError&) {
    }
    if (sub && exp) {
        return exp->weighted_rms_residual < sub->weighted_rms_residual - 1e-12 ? *exp : *sub;
    }
    if (sub) return *sub;
    if (exp) return *exp;
    throw FitError("no model");
}

FittedModel select_model(const LossHistory& history, const FitConfig& cfg,
                         std::optional<CurveFamily> family_hint) {
    return select_model(history.records(), cfg, family_hint);
}

double predict_loss_at(const FittedModel& model, double k) {
    if (!(k >= 0.0)) throw std::invalid_argument(fmt::format("cannot predict at iteration {}", k));
    return std::max(evaluate(model.params, k), model.asymptote());
}

double backtest_error(const LossHistory& history, const FitConfig& cfg, std::size_t horizon,
                      std::optional<CurveFamily> family_hint) {
    cfg.validate();
    const auto records = history.records();
    if (records.size() <= cfg.min_history + horizon) throw FitError("insufficient history");

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t len = cfg.min_history; len <= records.size(); ++len) {
        const auto prefix = records.first(len);
        const std::uint64_t target = prefix.back().iteration + horizon;
        const auto at = history.index_of(target);
        if (!at) continue;
        FittedModel model;
        try {
            model = select_model(prefix, cfg, family_hint);
        } catch (const FitError&) {
            continue;
        }
        const double actual = records[*at].loss;
        const double predicted = predict_loss_at(model, static_cast<double>(target));
        total += std::abs(predicted - actual) / std::max(std::abs(actual), 1e-12);
        ++count;
    }
    if (count == 0) throw FitError("no model");
    return total / static_cast<double>(count);
}

}  // namespace slaq
