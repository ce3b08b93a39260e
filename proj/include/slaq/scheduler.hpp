#pragma once

#include <slaq/core.hpp>
#include <slaq/predictor.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>

namespace slaq {

/// Maps a core grant to an iteration rate: linear in cores up to
/// `max_parallelism`, flat beyond.
struct CostModel {
    double work_per_iteration = 1.0;  ///< core-seconds per iteration
    int max_parallelism = 1;

    void validate() const;
};

double iterations_in_epoch(const CostModel& cost, int cores, double epoch_length);

struct AllocationPlan {
    std::int64_t epoch_index = 0;
    std::map<JobId, int> assignments;
    int capacity = 0;

    [[nodiscard]] int total() const noexcept;
    [[nodiscard]] int cores_for(JobId id) const noexcept;
};

struct GainEstimate {
    JobId job_id{};
    int cores_if_granted = 0;
    double normalized_gain = 0.0;
};

/// One running job as seen by an allocator. Without a model the job is
/// scheduled with the bootstrap gain.
struct Candidate {
    const JobState* job = nullptr;
    std::optional<FittedModel> model;
    CostModel cost;
};

/// Jobs paused longer than this many epochs jump the queue when the cluster
/// is oversubscribed.
inline constexpr int kMaxPausedEpochs = 10;

/// Predicted loss reduction over one epoch with `cores`, in units of the
/// job's largest observed per-iteration drop.
double predict_epoch_reduction(const JobState& job, const FittedModel& model, const CostModel& cost,
                               int cores, double epoch_length);

/// Quality-maximizing greedy allocation.
///
/// Every job first receives one core. Remaining cores are handed out one at a
/// time to the job whose next core buys the largest predicted normalized loss
/// reduction (ties: smaller job id). Only the winner's key changes after a
/// grant, so the loop runs on a max-heap in O((C - J) log J). Jobs without a
/// usable model gain, per core, as much as the best fitted job gains from its
/// first core. When jobs outnumber cores, the C jobs with the largest
/// single-core gain run and the rest pause for the epoch.
AllocationPlan allocate_slaq(std::span<const Candidate> jobs, const ClusterSpec& spec,
                             std::int64_t epoch_index = 0);

/// Work-conserving fair share: equal integer shares, remainder to the lowest
/// ids, capped jobs release their excess to the others until a fixpoint.
AllocationPlan allocate_fair(std::span<const Candidate> jobs, const ClusterSpec& spec,
                             std::int64_t epoch_index = 0);

}  // namespace slaq
