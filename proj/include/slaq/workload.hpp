#pragma once

#include <slaq/core.hpp>
#include <slaq/predictor.hpp>
#include <slaq/scheduler.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace slaq {

/// Ground-truth description of a synthetic training job. Only the simulator
/// sees it; schedulers work from reported losses.
struct JobProfile {
    CurveFamily family = CurveFamily::Sublinear;
    CurveParams true_params = SublinearFit{};
    double initial_loss = 1.0;
    CostModel cost;
    /// Standard deviation of reported-loss noise as a fraction of the loss range.
    double noise_sigma = 0.0;
    double convergence_epsilon = 1e-3;
    std::int64_t max_iterations = 2000;

    [[nodiscard]] double asymptote() const noexcept { return asymptote_of(true_params); }
    /// initial_loss - asymptote
    [[nodiscard]] double loss_range() const noexcept { return initial_loss - asymptote(); }
};

/// Noise-free ground-truth loss at a (possibly fractional) iteration.
double true_loss(const JobProfile& profile, double k);

/// Builds a profile whose curve starts at `asymptote + range`. The sublinear
/// shape is 1 / (1 + linear k + quadratic k^2); the exponential one is mu^k.
JobProfile make_sublinear_profile(double range, double asymptote, double linear, double quadratic,
                                  CostModel cost);
JobProfile make_exponential_profile(double range, double asymptote, double mu, CostModel cost);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct WorkloadSpec {
    std::size_t n_jobs = 160;
    double mean_interarrival = 15.0;
    /// Family mix; the two fractions sum to 1.
    double sublinear_fraction = 0.5;
    double exponential_fraction = 0.5;

    Interval loss_range{1.0, 10.0};
    /// Asymptote as a multiple of the loss range.
    Interval asymptote_ratio{0.2, 1.0};
    Interval sublinear_linear{0.3, 2.0};
    Interval sublinear_quadratic{0.0, 0.05};
    Interval exponential_mu{0.6, 0.9};
    /// Core-seconds per iteration, drawn log-uniformly.
    Interval work_per_iteration{300.0, 1200.0};
    /// Inclusive integer range.
    Interval max_parallelism{64.0, 256.0};
    Interval noise_sigma{0.0, 0.001};
    double convergence_epsilon = 1e-3;
    std::int64_t max_iterations = 2000;
    std::uint64_t seed = 1;

    void validate() const;
};

struct WorkloadJob {
    JobId id{};
    double arrival_s = 0.0;
    JobProfile profile;
};

/// Poisson arrivals (first job at t = 0) with profiles drawn from the ranges in
/// `spec`. Identical specs give identical workloads.
std::vector<WorkloadJob> generate_workload(const WorkloadSpec& spec);

/// Draws one profile from the ranges in `spec` using `rng_seed`.
JobProfile sample_profile(const WorkloadSpec& spec, std::uint64_t rng_seed);

/// Stable 64-bit digest of a workload, printed by the CLI to prove pairing.
std::uint64_t workload_hash(const std::vector<WorkloadJob>& jobs);

}  // namespace slaq
