#include <slaq/simulator.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace slaq {

std::string_view to_string(Policy policy) noexcept {
    return policy == Policy::Slaq ? "slaq" : "fair";
}

std::optional<Policy> parse_policy(std::string_view text) noexcept {
    if (text == "slaq") return Policy::Slaq;
    if (text == "fair") return Policy::Fair;
    return std::nullopt;
}

void SimConfig::validate() const {
    cluster.validate();
    workload.validate();
    fit.validate();
    if (!(duration > 0.0)) throw std::invalid_argument("duration must be > 0");
    if (!(metrics_interval >= 0.0)) throw std::invalid_argument("metrics_interval must be >= 0");
    if (replay.max_parallelism < 1) throw std::invalid_argument("replay max_parallelism must be >= 1");
    if (!(replay.convergence_epsilon > 0.0)) {
        throw std::invalid_argument("replay convergence_epsilon must be > 0");
    }
}

std::vector<SimJob> to_sim_jobs(const std::vector<WorkloadJob>& workload) {
    std::vector<SimJob> out;
    out.reserve(workload.size());
    for (const auto& j : workload) out.push_back({j.id, j.arrival_s, j.profile});
    return out;
}

std::vector<SimJob> to_sim_jobs(const LossTrace& trace) {
    std::vector<SimJob> out;
    out.reserve(trace.jobs.size());
    for (const auto& j : trace.jobs) out.push_back({j.id, j.arrival_s, j});
    return out;
}

struct Simulation::Tracked {
    SimJob spec;
    JobState state;
    CostModel cost;
    std::optional<double> known_asymptote;
    std::optional<CurveFamily> known_family;
    double range = 1.0;
    double epsilon = 1e-3;
    std::int64_t max_iteration = std::numeric_limits<std::int64_t>::max();
    /// Trace jobs without declared length stop after their last row.
    std::optional<std::uint64_t> last_available;
    double noise_abs = 0.0;
    std::mt19937_64 rng;

    std::optional<FittedModel> model;
    std::size_t fitted_size = 0;

    bool admitted = false;
    bool done = false;
    std::optional<double> completed_at;
    double core_seconds = 0.0;
    std::vector<TrajectoryPoint> trajectory;

    [[nodiscard]] double source_loss(double k) const {
        if (const auto* p = std::get_if<JobProfile>(&spec.source)) return true_loss(*p, k);
        return std::get<TraceJob>(spec.source).loss_at(k);
    }
};

namespace {

std::uint64_t noise_seed(std::uint64_t seed, JobId id) {
    // splitmix64 finalizer over (seed, id)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(to_int(id)) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Simulation::Simulation(SimConfig cfg, std::vector<SimJob> jobs) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::stable_sort(jobs.begin(), jobs.end(), [](const SimJob& a, const SimJob& b) {
        if (a.arrival_s != b.arrival_s) return a.arrival_s < b.arrival_s;
        return a.id < b.id;
    });
    for (std::size_t i = 1; i < jobs.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (jobs[j].id == jobs[i].id) {
                throw std::invalid_argument(fmt::format("duplicate job id {}", to_int(jobs[i].id)));
            }
        }
    }

    jobs_.reserve(jobs.size());
    for (auto& spec : jobs) {
        if (!(spec.arrival_s >= 0.0)) {
            throw std::invalid_argument(fmt::format("job {} has negative arrival", to_int(spec.id)));
        }
        Tracked t;
        t.state.id = spec.id;
        t.state.arrival_time = spec.arrival_s;
        t.rng.seed(noise_seed(cfg_.workload.seed, spec.id));

        if (const auto* p = std::get_if<JobProfile>(&spec.source)) {
            p->cost.validate();
            t.cost = p->cost;
            t.known_asymptote = p->asymptote();
            t.known_family = p->family;
            t.range = true_loss(*p, 0.0) - p->asymptote();
            t.epsilon = p->convergence_epsilon;
            t.max_iteration = p->max_iterations;
            t.noise_abs = p->noise_sigma * t.range;
        } else {
            const auto& trace = std::get<TraceJob>(spec.source);
            t.cost.work_per_iteration = trace.work_per_iteration();
            t.cost.max_parallelism = trace.max_parallelism.value_or(cfg_.replay.max_parallelism);
            t.known_asymptote = trace.asymptote;
            t.known_family = trace.family;
            const double floor = trace.asymptote.value_or(
                *std::min_element(trace.losses.begin(), trace.losses.end()));
            t.range = trace.loss_at(0.0) - floor;
            if (!(t.range > 0.0)) t.range = std::max(std::abs(trace.loss_at(0.0)), 1e-12);
            t.epsilon = trace.convergence_epsilon.value_or(cfg_.replay.convergence_epsilon);
            if (trace.max_iterations) {
                t.max_iteration = *trace.max_iterations;
            } else {
                t.last_available = trace.iterations.back();
            }
        }
        if (!(t.range > 0.0)) {
            throw std::invalid_argument(fmt::format("job {} has no loss range", to_int(spec.id)));
        }
        if (cfg_.use_family_hints) t.state.family_hint = t.known_family;
        t.spec = std::move(spec);
        jobs_.push_back(std::move(t));
    }
}

Simulation::Simulation(Simulation&&) noexcept = default;
Simulation& Simulation::operator=(Simulation&&) noexcept = default;
Simulation::~Simulation() = default;

Simulation::Tracked& Simulation::find(JobId id) {
    for (auto& t : jobs_) {
        if (t.state.id == id) return t;
    }
    throw std::out_of_range(fmt::format("unknown job {}", to_int(id)));
}

const Simulation::Tracked* Simulation::find_if(JobId id) const {
    for (const auto& t : jobs_) {
        if (t.state.id == id) return &t;
    }
    return nullptr;
}

const JobState& Simulation::job_state(JobId id) const {
    const Tracked* t = find_if(id);
    if (t == nullptr) throw std::out_of_range(fmt::format("unknown job {}", to_int(id)));
    return t->state;
}

std::vector<JobState> Simulation::job_states() const {
    std::vector<JobState> out;
    for (const auto& t : jobs_) {
        if (t.admitted) out.push_back(t.state);
    }
    std::sort(out.begin(), out.end(), [](const JobState& a, const JobState& b) { return a.id < b.id; });
    return out;
}

std::optional<double> Simulation::normalization_asymptote(const Tracked& job) const {
    if (job.known_asymptote) return job.known_asymptote;
    if (job.model) return job.model->asymptote();
    return std::nullopt;
}

double Simulation::current_normalized_loss(const Tracked& job) const {
    const auto asymptote = normalization_asymptote(job);
    if (!asymptote) return 1.0;
    const double initial = job.state.history.front().loss;
    if (!(initial > *asymptote)) return 1.0;
    return normalized_loss(job.state, *asymptote);
}

void Simulation::record(Tracked& job, std::uint64_t iteration, double time) {
    double loss = job.source_loss(static_cast<double>(iteration));
    if (iteration > 0 && job.noise_abs > 0.0) {
        const double z = std::normal_distribution<double>(0.0, 1.0)(job.rng);
        loss += std::clamp(z, -4.0, 4.0) * job.noise_abs;
    }
    job.state.history.append({iteration, time, loss});
    job.trajectory.push_back({time, current_normalized_loss(job)});
}

bool Simulation::has_converged(const Tracked& job) const {
    const auto records = job.state.history.records();
    if (records.size() < kConvergenceWindow + 1) return false;
    const double threshold = job.epsilon * job.range;
    for (std::size_t i = records.size() - kConvergenceWindow; i < records.size(); ++i) {
        if (!(records[i - 1].loss - records[i].loss < threshold)) return false;
    }
    return true;
}

void Simulation::admit_arrivals() {
    while (next_arrival_ < jobs_.size() && jobs_[next_arrival_].spec.arrival_s <= now_ + 1e-9) {
        Tracked& job = jobs_[next_arrival_++];
        job.admitted = true;
        job.state.phase = Phase::Pending;
        job.trajectory.push_back({job.spec.arrival_s, 1.0});
        record(job, 0, now_);
    }
}

void Simulation::refresh_model(Tracked& job) {
    const std::size_t n = job.state.history.size();
    if (n < cfg_.fit.min_history) {
        job.model.reset();
        return;
    }
    if (n == job.fitted_size) return;
    job.fitted_size = n;
    try {
        job.model = select_model(job.state.history, cfg_.fit, job.state.family_hint);
    } catch (const FitError&) {
        job.model.reset();
    }
}

AllocationPlan Simulation::plan_epoch() {
    const auto started = std::chrono::steady_clock::now();

    std::vector<Candidate> candidates;
    for (auto& job : jobs_) {
        if (!job.admitted || job.done) continue;
        if (cfg_.policy == Policy::Slaq || !job.known_asymptote) refresh_model(job);
        Candidate c;
        c.job = &job.state;
        c.cost = job.cost;
        if (cfg_.policy == Policy::Slaq) c.model = job.model;
        candidates.push_back(std::move(c));
    }

    AllocationPlan plan = cfg_.policy == Policy::Slaq
                              ? allocate_slaq(candidates, cfg_.cluster, epoch_)
                              : allocate_fair(candidates, cfg_.cluster, epoch_);

    const std::chrono::duration<double, std::milli> elapsed =
        std::chrono::steady_clock::now() - started;
    bundle_.scheduler_latencies.push_back({epoch_, elapsed.count()});
    return plan;
}

void Simulation::sample_metrics(const AllocationPlan& plan) {
    if (now_ + 1e-9 < next_sample_) return;
    const double interval = cfg_.metrics_interval > 0.0 ? cfg_.metrics_interval : cfg_.cluster.epoch_length;
    while (next_sample_ <= now_ + 1e-9) next_sample_ += interval;

    std::vector<double> losses;
    std::vector<RankedJob> ranked;
    for (const auto& job : jobs_) {
        if (!job.admitted || job.done) continue;
        const double nl = current_normalized_loss(job);
        losses.push_back(nl);
        ranked.push_back({job.state.id, nl});
    }
    const auto avg = avg_normalized_loss(losses);
    if (!avg) return;

    TimeSample s;
    s.sim_time = now_;
    s.avg_normalized_loss = *avg;
    s.running_jobs = losses.size();
    s.shares = group_shares(ranked, plan);
    const GroupSizes sizes = group_sizes(losses.size());
    s.high_jobs = sizes.high;
    s.medium_jobs = sizes.medium;
    s.low_jobs = sizes.low;
    bundle_.time_series.push_back(s);
}

void Simulation::advance_epoch(const AllocationPlan& plan) {
    for (const auto& [id, cores] : plan.assignments) {
        const Tracked* t = find_if(id);
        if (t == nullptr || !t->admitted || t->done) {
            throw std::invalid_argument(
                fmt::format("plan for epoch {} references unknown job {}", epoch_, to_int(id)));
        }
        if (cores < 0) throw std::invalid_argument("plan assigns negative cores");
    }
    if (plan.total() > cfg_.cluster.capacity) {
        throw std::invalid_argument(fmt::format("plan for epoch {} exceeds capacity", epoch_));
    }

    const double period = cfg_.cluster.epoch_length;
    for (auto& job : jobs_) {
        if (!job.admitted || job.done) continue;
        JobState& st = job.state;
        const int cores = plan.cores_for(st.id);
        st.current_cores = cores;
        if (cores == 0) {
            st.phase = Phase::Pending;
            ++st.paused_epochs;
            continue;
        }
        st.phase = Phase::Running;
        st.paused_epochs = 0;

        const double steps = iterations_in_epoch(job.cost, cores, period);
        const double rate = steps / period;
        const double start = st.progress;
        double end = start + steps;
        if (std::abs(end - std::round(end)) < 1e-9 * std::max(1.0, end)) end = std::round(end);

        std::optional<double> finished_at;
        const auto first = static_cast<std::uint64_t>(std::floor(start)) + 1;
        const auto last = static_cast<std::uint64_t>(std::floor(end));
        for (std::uint64_t k = first; k <= last; ++k) {
            const double t = std::min(now_ + (static_cast<double>(k) - start) / rate, now_ + period);
            if (job.last_available && k > *job.last_available) {
                finished_at = t;
                st.progress = static_cast<double>(k - 1);
                break;
            }
            record(job, k, t);
            if (has_converged(job) || static_cast<std::int64_t>(k) >= job.max_iteration) {
                finished_at = t;
                st.progress = static_cast<double>(k);
                break;
            }
        }

        if (finished_at) {
            job.core_seconds += cores * (*finished_at - now_);
            job.done = true;
            job.completed_at = finished_at;
            st.phase = Phase::Converged;
            st.current_cores = 0;
        } else {
            job.core_seconds += cores * period;
            st.progress = end;
        }
    }
    ++epoch_;
    now_ = static_cast<double>(epoch_) * period;
}

bool Simulation::finished() const noexcept {
    if (now_ >= cfg_.duration) return true;
    if (next_arrival_ < jobs_.size()) return false;
    return std::all_of(jobs_.begin(), jobs_.end(), [](const Tracked& t) { return t.done; });
}

JobSummary Simulation::summarize(const Tracked& job) const {
    JobSummary s;
    s.job_id = job.state.id;
    s.arrival_s = job.spec.arrival_s;
    if (job.known_family) {
        s.family = to_string(*job.known_family);
    } else if (job.model) {
        s.family = to_string(job.model->family);
    } else {
        s.family = "unknown";
    }
    s.time_to_90pct_s = time_to_fraction(job.trajectory, job.spec.arrival_s, 0.90);
    s.time_to_95pct_s = time_to_fraction(job.trajectory, job.spec.arrival_s, 0.95);
    if (job.completed_at) s.completion_s = *job.completed_at - job.spec.arrival_s;
    s.total_core_seconds = job.core_seconds;
    return s;
}

MetricsBundle Simulation::metrics() const {
    MetricsBundle out = bundle_;
    out.job_summaries.clear();
    for (const auto& job : jobs_) {
        if (job.admitted) out.job_summaries.push_back(summarize(job));
        out.arrivals_end_s = std::max(out.arrivals_end_s, job.spec.arrival_s);
    }
    std::sort(out.job_summaries.begin(), out.job_summaries.end(),
              [](const JobSummary& a, const JobSummary& b) { return a.job_id < b.job_id; });
    return out;
}

MetricsBundle Simulation::run() {
    while (!finished()) {
        admit_arrivals();
        const bool any_active = std::any_of(jobs_.begin(), jobs_.end(), [](const Tracked& t) {
            return t.admitted && !t.done;
        });
        if (!any_active) {
            if (next_arrival_ >= jobs_.size()) break;
            const double period = cfg_.cluster.epoch_length;
            const auto next_epoch = static_cast<std::int64_t>(
                std::ceil(jobs_[next_arrival_].spec.arrival_s / period - 1e-9));
            epoch_ = std::max(epoch_ + 1, next_epoch);
            now_ = static_cast<double>(epoch_) * period;
            continue;
        }
        const AllocationPlan plan = plan_epoch();
        sample_metrics(plan);
        advance_epoch(plan);
    }
    return metrics();
}

LossTrace Simulation::to_trace() const {
    LossTrace trace;
    for (const auto& job : jobs_) {
        if (!job.admitted) continue;
        TraceJob t;
        t.id = job.state.id;
        t.arrival_s = job.spec.arrival_s;
        for (const auto& r : job.state.history.records()) {
            t.iterations.push_back(r.iteration);
            t.losses.push_back(r.loss);
            t.core_seconds.push_back(job.cost.work_per_iteration);
        }
        t.asymptote = job.known_asymptote;
        t.max_parallelism = job.cost.max_parallelism;
        t.family = job.known_family;
        if (!job.last_available) t.max_iterations = job.max_iteration;
        t.convergence_epsilon = job.epsilon;
        trace.jobs.push_back(std::move(t));
    }
    std::sort(trace.jobs.begin(), trace.jobs.end(),
              [](const TraceJob& a, const TraceJob& b) { return a.id < b.id; });
    return trace;
}

MetricsBundle run_simulation(const SimConfig& cfg) {
    cfg.validate();
    return Simulation(cfg, to_sim_jobs(generate_workload(cfg.workload))).run();
}

MetricsBundle replay_trace(const LossTrace& trace, const SimConfig& cfg) {
    if (trace.jobs.empty()) throw TraceError("trace has no jobs");
    return Simulation(cfg, to_sim_jobs(trace)).run();
}

}  // namespace slaq
