#include <slaq/scheduler.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace slaq {

void CostModel::validate() const {
    if (!(work_per_iteration > 0.0)) throw std::invalid_argument("work_per_iteration must be > 0");
    if (max_parallelism < 1) throw std::invalid_argument("max_parallelism must be >= 1");
}

double iterations_in_epoch(const CostModel& cost, int cores, double epoch_length) {
    if (cores <= 0) return 0.0;
    return std::min(cores, cost.max_parallelism) * epoch_length / cost.work_per_iteration;
}

int AllocationPlan::total() const noexcept {
    int sum = 0;
    for (const auto& [id, cores] : assignments) sum += cores;
    return sum;
}

int AllocationPlan::cores_for(JobId id) const noexcept {
    auto it = assignments.find(id);
    return it == assignments.end() ? 0 : it->second;
}

double predict_epoch_reduction(const JobState& job, const FittedModel& model, const CostModel& cost,
                               int cores, double epoch_length) {
    const double scale = job.history.max_delta();
    if (!(scale > 0.0)) {
        throw std::domain_error(fmt::format("job {} has no positive loss drop to normalize by",
                                            to_int(job.id)));
    }
    const double steps = iterations_in_epoch(cost, cores, epoch_length);
    if (steps == 0.0) return 0.0;
    const double now = predict_loss_at(model, job.progress);
    const double later = predict_loss_at(model, job.progress + steps);
    return std::max(0.0, (now - later) / scale);
}

namespace {

std::vector<const Candidate*> sorted_by_id(std::span<const Candidate> jobs) {
    std::vector<const Candidate*> out;
    out.reserve(jobs.size());
    for (const auto& c : jobs) {
        if (c.job == nullptr) throw std::invalid_argument("candidate without job state");
        c.cost.validate();
        out.push_back(&c);
    }
    std::sort(out.begin(), out.end(),
              [](const Candidate* a, const Candidate* b) { return a->job->id < b->job->id; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i - 1]->job->id == out[i]->job->id) {
            throw std::invalid_argument(
                fmt::format("job {} appears twice in allocation input", to_int(out[i]->job->id)));
        }
    }
    return out;
}

bool has_usable_model(const Candidate& c) {
    return c.model.has_value() && c.job->history.max_delta() > 0.0;
}

// Predicted normalized reduction for one job as a function of its grant.
class ReductionCurve {
public:
    ReductionCurve(const Candidate& c, double epoch_length, double bootstrap_gain)
        : candidate_(&c), epoch_length_(epoch_length), bootstrap_gain_(bootstrap_gain),
          fitted_(has_usable_model(c)) {}

    [[nodiscard]] double at(int cores) const {
        if (fitted_) {
            return predict_epoch_reduction(*candidate_->job, *candidate_->model, candidate_->cost,
                                           cores, epoch_length_);
        }
        return bootstrap_gain_ * std::min(cores, candidate_->cost.max_parallelism);
    }

    /// Gain of going from `cores` to `cores + 1`, given at(cores) == current.
    /// Bootstrap jobs gain exactly their constant so that equal jobs tie.
    [[nodiscard]] double marginal(int cores, double current) const {
        if (fitted_) return at(cores + 1) - current;
        return cores < cap() ? bootstrap_gain_ : 0.0;
    }

    [[nodiscard]] JobId id() const noexcept { return candidate_->job->id; }
    [[nodiscard]] int cap() const noexcept { return candidate_->cost.max_parallelism; }
    [[nodiscard]] bool overdue() const noexcept {
        return candidate_->job->paused_epochs > kMaxPausedEpochs;
    }

private:
    const Candidate* candidate_;
    double epoch_length_;
    double bootstrap_gain_;
    bool fitted_;
};

struct LowerPriority {
    bool operator()(const GainEstimate& a, const GainEstimate& b) const noexcept {
        if (a.normalized_gain != b.normalized_gain) return a.normalized_gain < b.normalized_gain;
        return a.job_id > b.job_id;
    }
};

// Oversubscribed cluster: one core each to the `capacity` highest-ranked jobs.
template <class Key>
void grant_single_cores(std::vector<std::pair<Key, JobId>> ranked, AllocationPlan& plan) {
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        plan.assignments[ranked[i].second] = i < static_cast<std::size_t>(plan.capacity) ? 1 : 0;
    }
}

}  // namespace

AllocationPlan allocate_slaq(std::span<const Candidate> jobs, const ClusterSpec& spec,
                             std::int64_t epoch_index) {
    spec.validate();
    AllocationPlan plan;
    plan.epoch_index = epoch_index;
    plan.capacity = spec.capacity;
    if (jobs.empty()) return plan;

    const auto ordered = sorted_by_id(jobs);

    double bootstrap_gain = 0.0;
    bool any_fitted = false;
    for (const Candidate* c : ordered) {
        if (!has_usable_model(*c)) continue;
        any_fitted = true;
        bootstrap_gain = std::max(
            bootstrap_gain,
            predict_epoch_reduction(*c->job, *c->model, c->cost, 1, spec.epoch_length));
    }
    if (!any_fitted) bootstrap_gain = 1.0;

    std::vector<ReductionCurve> curves;
    curves.reserve(ordered.size());
    for (const Candidate* c : ordered) curves.emplace_back(*c, spec.epoch_length, bootstrap_gain);

    if (curves.size() > static_cast<std::size_t>(spec.capacity)) {
        using Key = std::pair<bool, double>;
        std::vector<std::pair<Key, JobId>> ranked;
        ranked.reserve(curves.size());
        for (const auto& curve : curves) ranked.push_back({{curve.overdue(), curve.at(1)}, curve.id()});
        grant_single_cores(std::move(ranked), plan);
        return plan;
    }

    std::vector<int> granted(curves.size(), 1);
    std::vector<double> reduction(curves.size());
    std::vector<GainEstimate> initial;
    initial.reserve(curves.size());
    for (std::size_t i = 0; i < curves.size(); ++i) {
        reduction[i] = curves[i].at(1);
        if (curves[i].cap() > 1) {
            initial.push_back({curves[i].id(), 2, curves[i].marginal(1, reduction[i])});
        }
    }
    std::priority_queue<GainEstimate, std::vector<GainEstimate>, LowerPriority> heap(
        LowerPriority{}, std::move(initial));

    auto index_of = [&](JobId id) {
        auto it = std::lower_bound(curves.begin(), curves.end(), id,
                                   [](const ReductionCurve& c, JobId v) { return c.id() < v; });
        return static_cast<std::size_t>(it - curves.begin());
    };

    int spare = spec.capacity - static_cast<int>(curves.size());
    while (spare > 0 && !heap.empty()) {
        const GainEstimate top = heap.top();
        heap.pop();
        const std::size_t i = index_of(top.job_id);
        granted[i] = top.cores_if_granted;
        reduction[i] = curves[i].at(granted[i]);
        --spare;
        if (granted[i] < curves[i].cap()) {
            const int next = granted[i] + 1;
            heap.push({top.job_id, next, curves[i].marginal(granted[i], reduction[i])});
        }
    }

    for (std::size_t i = 0; i < curves.size(); ++i) plan.assignments[curves[i].id()] = granted[i];
    return plan;
}

AllocationPlan allocate_fair(std::span<const Candidate> jobs, const ClusterSpec& spec,
                             std::int64_t epoch_index) {
    spec.validate();
    AllocationPlan plan;
    plan.epoch_index = epoch_index;
    plan.capacity = spec.capacity;
    if (jobs.empty()) return plan;

    const auto ordered = sorted_by_id(jobs);
    const std::size_t n = ordered.size();

    if (n > static_cast<std::size_t>(spec.capacity)) {
        std::vector<std::pair<bool, JobId>> ranked;
        ranked.reserve(n);
        for (const Candidate* c : ordered) {
            ranked.push_back({c->job->paused_epochs > kMaxPausedEpochs, c->job->id});
        }
        grant_single_cores(std::move(ranked), plan);
        return plan;
    }

    std::vector<int> share(n, 0);
    std::vector<bool> capped(n, false);
    while (true) {
        int available = spec.capacity;
        std::size_t open = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (capped[i]) {
                available -= share[i];
            } else {
                ++open;
            }
        }
        if (open == 0) break;

        const int base = available / static_cast<int>(open);
        int remainder = available % static_cast<int>(open);
        bool newly_capped = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (capped[i]) continue;
            share[i] = base + (remainder > 0 ? 1 : 0);
            if (remainder > 0) --remainder;
            const int cap = ordered[i]->cost.max_parallelism;
            if (share[i] > cap) {
                share[i] = cap;
                capped[i] = true;
                newly_capped = true;
            }
        }
        if (!newly_capped) break;
    }

    for (std::size_t i = 0; i < n; ++i) plan.assignments[ordered[i]->job->id] = share[i];
    return plan;
}

}  // namespace slaq
