#include <slaq/core.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace slaq {

std::string_view to_string(CurveFamily family) noexcept {
    switch (family) {
    case CurveFamily::Sublinear: return "sublinear";
    case CurveFamily::Exponential: return "exponential";
    }
    return "unknown";
}

std::optional<CurveFamily> parse_family(std::string_view text) noexcept {
    if (text == "sublinear") return CurveFamily::Sublinear;
    if (text == "exponential") return CurveFamily::Exponential;
    return std::nullopt;
}

std::string_view to_string(Phase phase) noexcept {
    switch (phase) {
    case Phase::Pending: return "pending";
    case Phase::Running: return "running";
    case Phase::Converged: return "converged";
    case Phase::Removed: return "removed";
    }
    return "unknown";
}

void LossHistory::append(const LossRecord& record) {
    if (!records_.empty()) {
        const LossRecord& last = records_.back();
        if (record.iteration <= last.iteration) {
            throw std::invalid_argument(fmt::format(
                "loss record iteration {} does not follow last iteration {}", record.iteration,
                last.iteration));
        }
        if (record.sim_time < last.sim_time) {
            throw std::invalid_argument(fmt::format(
                "loss record time {} precedes last record time {}", record.sim_time,
                last.sim_time));
        }
        max_delta_ = std::max(max_delta_, last.loss - record.loss);
    }
    records_.push_back(record);
    running_max_.push_back(max_delta_);
}

std::optional<std::size_t> LossHistory::index_of(std::uint64_t iteration) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), iteration,
                               [](const LossRecord& r, std::uint64_t k) { return r.iteration < k; });
    if (it == records_.end() || it->iteration != iteration) return std::nullopt;
    return static_cast<std::size_t>(it - records_.begin());
}

LossHistory append_loss(LossHistory history, const LossRecord& record) {
    history.append(record);
    return history;
}

double normalized_delta(const LossHistory& history, std::uint64_t k) {
    if (k == 0) throw std::invalid_argument("normalized delta needs iteration k >= 1");
    auto at = history.index_of(k);
    auto before = history.index_of(k - 1);
    if (!at || !before) {
        throw std::out_of_range(
            fmt::format("normalized delta needs records at iterations {} and {}", k - 1, k));
    }
    const auto records = history.records();
    const double delta = records[*before].loss - records[*at].loss;
    if (delta <= 0.0) return 0.0;
    // A positive delta implies a positive running max that is at least delta.
    return std::min(1.0, delta / history.max_delta_at(*at));
}

double normalized_loss(double initial_loss, double current_loss, double asymptote) {
    const double span = initial_loss - asymptote;
    if (!(span > 0.0) || !std::isfinite(span)) {
        throw std::domain_error("normalized loss undefined: initial loss not above asymptote");
    }
    return std::clamp((current_loss - asymptote) / span, 0.0, 1.0);
}

double normalized_loss(const JobState& job, double asymptote) {
    if (job.history.empty()) throw std::invalid_argument("normalized loss needs a loss record");
    return normalized_loss(job.history.front().loss, job.history.back().loss, asymptote);
}

void ClusterSpec::validate() const {
    if (capacity < 1) throw std::invalid_argument("cluster capacity must be >= 1");
    if (!(epoch_length > 0.0)) throw std::invalid_argument("epoch length must be > 0");
}

}  // namespace slaq
