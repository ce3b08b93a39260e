#pragma once

#include <slaq/core.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>

namespace slaq {

/// g(k) = 1 / (a k^2 + b k + c) + d, covering O(1/k) and O(1/k^2) decay.
/// Fits keep a, b >= 0 and c > 0 so the curve is non-increasing for k >= 0.
struct SublinearFit {
    double a = 0.0;
    double b = 1.0;
    double c = 1.0;
    double d = 0.0;

    [[nodiscard]] double evaluate(double k) const noexcept { return 1.0 / ((a * k + b) * k + c) + d; }
    [[nodiscard]] double asymptote() const noexcept { return d; }
};

/// h(k) = mu^(k - b) + c with 0 < mu < 1.
struct ExponentialFit {
    double mu = 0.5;
    double b = 0.0;
    double c = 0.0;

    [[nodiscard]] double evaluate(double k) const noexcept;
    [[nodiscard]] double asymptote() const noexcept { return c; }
};

using CurveParams = std::variant<SublinearFit, ExponentialFit>;

CurveFamily family_of(const CurveParams& params) noexcept;
double evaluate(const CurveParams& params, double k) noexcept;
double asymptote_of(const CurveParams& params) noexcept;

struct FittedModel {
    CurveFamily family = CurveFamily::Sublinear;
    CurveParams params;
    double weighted_rms_residual = 0.0;
    std::size_t n_points = 0;

    [[nodiscard]] double asymptote() const noexcept { return asymptote_of(params); }
};

struct FitConfig {
    /// Weight of the point at iteration k_i is decay^(k_latest - k_i).
    double decay = 0.9;
    std::size_t min_history = 5;
    int max_refine_steps = 50;
    /// Refinement stops once every parameter moves by less than this fraction.
    double refine_tolerance = 1e-9;

    void validate() const;
};

/// Raised when a history cannot be fitted. The message is one of
/// "insufficient history", "degenerate history", "fit infeasible", "no model".
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

SublinearFit fit_sublinear(const LossHistory& history, const FitConfig& cfg);
SublinearFit fit_sublinear(std::span<const LossRecord> records, const FitConfig& cfg);

ExponentialFit fit_exponential(const LossHistory& history, const FitConfig& cfg);
ExponentialFit fit_exponential(std::span<const LossRecord> records, const FitConfig& cfg);

/// Weighted RMS residual of `params` against `records`, weighted as in fitting.
double weighted_rms_residual(const CurveParams& params, std::span<const LossRecord> records,
                             const FitConfig& cfg);

/// Fits both families and keeps the lower weighted RMS residual (ties go to
/// Sublinear). A `family_hint` skips selection and fits only that family.
FittedModel select_model(const LossHistory& history, const FitConfig& cfg,
                         std::optional<CurveFamily> family_hint = std::nullopt);
FittedModel select_model(std::span<const LossRecord> records, const FitConfig& cfg,
                         std::optional<CurveFamily> family_hint = std::nullopt);

/// Fitted curve at a possibly fractional iteration, never below the asymptote.
double predict_loss_at(const FittedModel& model, double k);

/// Mean relative error of forecasting `horizon` iterations past every prefix
/// of at least `cfg.min_history` records.
double backtest_error(const LossHistory& history, const FitConfig& cfg, std::size_t horizon,
                      std::optional<CurveFamily> family_hint = std::nullopt);

}  // namespace slaq
