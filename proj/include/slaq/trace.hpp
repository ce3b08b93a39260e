#pragma once

#include <slaq/core.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

namespace slaq {

/// Loss-trace files are comma-separated text with the header
///
///     job_id,iteration,loss,core_seconds_per_iteration,arrival_s
///
/// and one row per reported iteration. Lines starting with '#' are comments.
/// A comment of the form
///
///     #! job_id=3 asymptote=0.25 max_parallelism=128 family=sublinear
///
/// optionally carries per-job metadata; recognized keys are asymptote,
/// max_parallelism, family, max_iterations and convergence_epsilon.
struct TraceJob {
    JobId id{};
    double arrival_s = 0.0;
    std::vector<std::uint64_t> iterations;
    std::vector<double> losses;
    std::vector<double> core_seconds;

    std::optional<double> asymptote;
    std::optional<int> max_parallelism;
    std::optional<CurveFamily> family;
    std::optional<std::int64_t> max_iterations;
    std::optional<double> convergence_epsilon;

    /// Linear interpolation between recorded iterations, flat outside them.
    [[nodiscard]] double loss_at(double k) const;
    /// Mean core-seconds per iteration over the job's rows.
    [[nodiscard]] double work_per_iteration() const;
};

struct LossTrace {
    std::vector<TraceJob> jobs;  ///< sorted by id
};

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

LossTrace parse_trace(std::istream& in);
LossTrace read_trace(const std::filesystem::path& path);

/// Writes rows with full double precision so a re-read trace is exact.
void write_trace(std::ostream& out, const LossTrace& trace);
void write_trace(const std::filesystem::path& path, const LossTrace& trace);

}  // namespace slaq
