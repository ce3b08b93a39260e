#pragma once

#include <slaq/core.hpp>
#include <slaq/metrics.hpp>
#include <slaq/predictor.hpp>
#include <slaq/scheduler.hpp>
#include <slaq/trace.hpp>
#include <slaq/workload.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

namespace slaq {

enum class Policy { Slaq, Fair };

std::string_view to_string(Policy policy) noexcept;
std::optional<Policy> parse_policy(std::string_view text) noexcept;

/// Settings for trace jobs that carry no metadata of their own.
struct ReplayDefaults {
    int max_parallelism = 64;
    double convergence_epsilon = 1e-3;
};

struct SimConfig {
    ClusterSpec cluster;
    Policy policy = Policy::Slaq;
    WorkloadSpec workload;
    double duration = 20000.0;
    /// Sampling period of the time series; 0 means once per epoch.
    double metrics_interval = 0.0;
    FitConfig fit;
    /// Let declared optimizer families override model selection.
    bool use_family_hints = false;
    ReplayDefaults replay;

    void validate() const;
};

using LossSource = std::variant<JobProfile, TraceJob>;

struct SimJob {
    JobId id{};
    double arrival_s = 0.0;
    LossSource source;
};

std::vector<SimJob> to_sim_jobs(const std::vector<WorkloadJob>& workload);
std::vector<SimJob> to_sim_jobs(const LossTrace& trace);

/// Number of trailing raw deltas that must all fall below
/// convergence_epsilon * loss range before a job counts as converged.
inline constexpr std::size_t kConvergenceWindow = 3;

/// Epoch-synchronous simulation of a shared cluster.
///
/// Each epoch: admit arrivals, fit models (SLAQ), allocate, sample metrics,
/// then advance every job by the iterations its cores buy. Reported losses
/// are the ground truth plus per-job Gaussian noise truncated at 4 sigma; the
/// record at iteration 0 is exact so every job starts at normalized loss 1.
class Simulation {
public:
    Simulation(SimConfig cfg, std::vector<SimJob> jobs);
    Simulation(Simulation&&) noexcept;
    Simulation& operator=(Simulation&&) noexcept;
    ~Simulation();

    /// Runs to completion (all jobs converged, or the configured duration).
    MetricsBundle run();

    /// Makes jobs with arrival <= now eligible and records their iteration 0.
    void admit_arrivals();
    /// Refreshes models as the policy needs and computes this epoch's plan.
    AllocationPlan plan_epoch();
    /// Appends one time-series sample for the current plan, if one is due.
    void sample_metrics(const AllocationPlan& plan);
    /// Applies `plan` for one epoch and moves the clock forward by T.
    void advance_epoch(const AllocationPlan& plan);

    [[nodiscard]] bool finished() const noexcept;
    [[nodiscard]] double now() const noexcept { return now_; }
    [[nodiscard]] std::int64_t epoch() const noexcept { return epoch_; }

    /// States of admitted jobs, sorted by id.
    [[nodiscard]] std::vector<JobState> job_states() const;
    [[nodiscard]] const JobState& job_state(JobId id) const;
    /// Summaries and time series collected so far.
    [[nodiscard]] MetricsBundle metrics() const;
    /// Reported losses of admitted jobs, with metadata for exact replay.
    [[nodiscard]] LossTrace to_trace() const;

private:
    struct Tracked;

    Tracked& find(JobId id);
    [[nodiscard]] const Tracked* find_if(JobId id) const;
    void refresh_model(Tracked& job);
    [[nodiscard]] double current_normalized_loss(const Tracked& job) const;
    [[nodiscard]] std::optional<double> normalization_asymptote(const Tracked& job) const;
    void record(Tracked& job, std::uint64_t iteration, double time);
    [[nodiscard]] bool has_converged(const Tracked& job) const;
    [[nodiscard]] JobSummary summarize(const Tracked& job) const;

    SimConfig cfg_;
    std::vector<Tracked> jobs_;  // sorted by arrival, then id
    std::size_t next_arrival_ = 0;
    double now_ = 0.0;
    std::int64_t epoch_ = 0;
    double next_sample_ = 0.0;
    MetricsBundle bundle_;
};

/// Generates the configured workload and simulates it.
MetricsBundle run_simulation(const SimConfig& cfg);

/// Simulates trace jobs instead of synthetic profiles.
MetricsBundle replay_trace(const LossTrace& trace, const SimConfig& cfg);

}  // namespace slaq
