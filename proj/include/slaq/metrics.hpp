#pragma once

#include <slaq/core.hpp>
#include <slaq/scheduler.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace slaq {

/// Fractions of allocated cores held by the top 25%, next 25% and bottom 50%
/// of running jobs ranked by normalized loss.
struct GroupShare {
    double high = 0.0;
    double medium = 0.0;
    double low = 0.0;
};

struct TimeSample {
    double sim_time = 0.0;
    double avg_normalized_loss = 0.0;
    std::size_t running_jobs = 0;
    GroupShare shares;
    /// Job counts per group, kept for comparing shares against job fractions.
    std::size_t high_jobs = 0;
    std::size_t medium_jobs = 0;
    std::size_t low_jobs = 0;
};

/// Durations are seconds since arrival; nullopt means never reached.
struct JobSummary {
    JobId job_id{};
    double arrival_s = 0.0;
    std::string family;
    std::optional<double> time_to_90pct_s;
    std::optional<double> time_to_95pct_s;
    std::optional<double> completion_s;
    double total_core_seconds = 0.0;
};

struct LatencySample {
    std::int64_t epoch = 0;
    double millis = 0.0;
};

struct MetricsBundle {
    std::vector<TimeSample> time_series;
    std::vector<JobSummary> job_summaries;
    std::vector<LatencySample> scheduler_latencies;
    /// Arrival time of the last job; samples up to here are steady state.
    double arrivals_end_s = 0.0;
};

/// One point of a job's normalized-loss trajectory.
struct TrajectoryPoint {
    double sim_time = 0.0;
    double normalized_loss = 1.0;
};

/// Current normalized loss of one running job.
struct RankedJob {
    JobId job_id{};
    double normalized_loss = 0.0;
};

/// Mean normalized loss; nullopt when nothing is running.
std::optional<double> avg_normalized_loss(std::span<const double> normalized_losses);

/// Seconds after `arrival_s` at which the trajectory first reaches
/// normalized loss <= 1 - fraction, interpolating linearly between points.
std::optional<double> time_to_fraction(std::span<const TrajectoryPoint> trajectory, double arrival_s,
                                       double fraction);

struct GroupSizes {
    std::size_t high = 0;
    std::size_t medium = 0;
    std::size_t low = 0;
};

/// Top ceil(25%), next ceil(25%), rest.
GroupSizes group_sizes(std::size_t n) noexcept;

GroupShare group_shares(std::span<const RankedJob> running, const AllocationPlan& plan);

/// Mean of `avg_normalized_loss` over samples with t0 <= sim_time <= t1.
std::optional<double> time_averaged_loss(const MetricsBundle& bundle, double t0, double t1);

struct ShareAverages {
    GroupShare shares;     ///< time-averaged core shares
    GroupShare fractions;  ///< time-averaged job fractions per group
    std::size_t samples = 0;
};

ShareAverages time_averaged_shares(const MetricsBundle& bundle, double t0, double t1);

/// Nearest-rank percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Writes timeseries.csv, jobs.csv and sched_latency.csv into `directory`,
/// creating it if needed. Numbers use 6 significant digits.
void export_csv(const MetricsBundle& bundle, const std::filesystem::path& directory);

/// Parses the files written by export_csv. Group job counts are not part of
/// the CSV contract and come back as zero.
MetricsBundle import_csv(const std::filesystem::path& directory);

/// 6-significant-digit rendering used by the CSV files.
std::string format_number(double value);

}  // namespace slaq
