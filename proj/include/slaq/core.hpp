#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace slaq {

/// Opaque job identifier. Ordering is used for deterministic tie-breaks.
enum class JobId : std::uint32_t {};

constexpr std::uint32_t to_int(JobId id) noexcept { return static_cast<std::uint32_t>(id); }

/// Convergence-curve family of an iterative optimizer.
enum class CurveFamily { Sublinear, Exponential };

std::string_view to_string(CurveFamily family) noexcept;
std::optional<CurveFamily> parse_family(std::string_view text) noexcept;

/// One reported training iteration.
struct LossRecord {
    std::uint64_t iteration = 0;
    double sim_time = 0.0;
    double loss = 0.0;
};

/// Per-job loss series plus the normalization scale: the largest
/// single-iteration loss drop seen so far (never negative).
class LossHistory {
public:
    LossHistory() = default;

    /// Appends a record; throws std::invalid_argument unless its iteration is
    /// strictly greater than the last one and its time is not earlier.
    void append(const LossRecord& record);

    [[nodiscard]] std::span<const LossRecord> records() const noexcept { return records_; }
    [[nodiscard]] bool empty() const noexcept { return records_.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
    [[nodiscard]] const LossRecord& front() const { return records_.front(); }
    [[nodiscard]] const LossRecord& back() const { return records_.back(); }

    [[nodiscard]] double max_delta() const noexcept { return max_delta_; }

    /// Scale in effect right after the record at `index` was appended.
    [[nodiscard]] double max_delta_at(std::size_t index) const { return running_max_.at(index); }

    /// Index of the record with the given iteration, if present.
    [[nodiscard]] std::optional<std::size_t> index_of(std::uint64_t iteration) const;

private:
    std::vector<LossRecord> records_;
    std::vector<double> running_max_;
    double max_delta_ = 0.0;
};

LossHistory append_loss(LossHistory history, const LossRecord& record);

/// Loss drop into iteration `k` divided by the largest drop observed up to
/// and including `k`. Loss increases map to 0.
double normalized_delta(const LossHistory& history, std::uint64_t k);

enum class Phase { Pending, Running, Converged, Removed };

std::string_view to_string(Phase phase) noexcept;

/// Scheduler-visible state of one job. `current_cores` is non-zero only while
/// Running; `progress` carries fractional iterations between epochs.
struct JobState {
    JobId id{};
    double arrival_time = 0.0;
    LossHistory history;
    Phase phase = Phase::Pending;
    int current_cores = 0;
    double progress = 0.0;
    /// Consecutive epochs this job was eligible but received no cores.
    int paused_epochs = 0;
    /// Optimizer family declared by the job owner, when known.
    std::optional<CurveFamily> family_hint;
};

/// Remaining distance to `asymptote` as a fraction of the initial distance,
/// clamped to [0, 1]. Throws std::domain_error for a zero quality range.
double normalized_loss(const JobState& job, double asymptote);
double normalized_loss(double initial_loss, double current_loss, double asymptote);

struct ClusterSpec {
    int capacity = 640;
    double epoch_length = 2.0;

    void validate() const;
};

}  // namespace slaq
