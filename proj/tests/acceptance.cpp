// Acceptance suite: one PASS/FAIL line per criterion. Bounds are pinned below.

#include <slaq/simulator.hpp>

#include "cli.hpp"
#include "oracles.hpp"
#include "scheduler_fixtures.hpp"

#include <fmt/format.h>

#include <chrono>
#include <regex>
#include <sstream>

using namespace slaq;

namespace {

// Prediction accuracy.
constexpr std::size_t kJobsPerFamily = 60;
constexpr std::uint64_t kHistoryLength = 41;  // iterations 0..40
constexpr std::size_t kHorizon = 10;
constexpr double kNoiseLo = 0.001;
constexpr double kNoiseHi = 0.005;
constexpr double kMaxNoisyError = 0.05;
constexpr double kMaxNoiselessError = 0.001;
constexpr double kPredictionSeconds = 10.0;

// Paired policy comparison.
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
constexpr double kMinLossReduction = 0.40;
constexpr double kPairedSeconds = 60.0;
constexpr double kMinT90Reduction = 0.25;
constexpr double kMinT95Reduction = 0.15;
constexpr double kMinHighShare = 0.45;
constexpr double kMaxLowShare = 0.30;
constexpr double kFairShareSlack = 0.07;

// Scheduler latency.
constexpr double kLatencyLargeMs = 5000.0;
constexpr double kLatencyMediumMs = 1000.0;

// Oracles.
constexpr int kGreedyCases = 1000;
constexpr double kGreedyTolerance = 1e-12;  // summation order only
constexpr int kRecoveryCasesPerFamily = 200;
constexpr double kRecoveryTolerance = 1e-4;
constexpr double kReplayTolerance = 1e-9;

int failures = 0;

void report(int id, bool pass, const std::string& name, const std::string& detail) {
    if (!pass) ++failures;
    fmt::print("{} criterion {}: {}: {}\n", pass ? "PASS" : "FAIL", id, name, detail);
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

LossHistory sample_history(const JobProfile& p, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, sigma * p.loss_range());
    LossHistory h;
    for (std::uint64_t k = 0; k < kHistoryLength; ++k) {
        const double noise = (k > 0 && sigma > 0.0) ? z(rng) : 0.0;
        h.append({k, static_cast<double>(k), true_loss(p, static_cast<double>(k)) + noise});
    }
    return h;
}

void prediction_accuracy() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2017);
    std::uniform_real_distribution<double> noise(kNoiseLo, kNoiseHi);
    std::string detail;
    bool pass = true;
    for (CurveFamily family : {CurveFamily::Sublinear, CurveFamily::Exponential}) {
        WorkloadSpec spec;
        spec.sublinear_fraction = family == CurveFamily::Sublinear ? 1.0 : 0.0;
        spec.exponential_fraction = 1.0 - spec.sublinear_fraction;
        double noisy = 0.0;
        double clean = 0.0;
        for (std::size_t j = 0; j < kJobsPerFamily; ++j) {
            const JobProfile p = sample_profile(spec, rng());
            noisy += backtest_error(sample_history(p, noise(rng), rng), FitConfig{}, kHorizon);
            clean += backtest_error(sample_history(p, 0.0, rng), FitConfig{}, kHorizon);
        }
        noisy /= kJobsPerFamily;
        clean /= kJobsPerFamily;
        pass = pass && noisy < kMaxNoisyError && clean < kMaxNoiselessError;
        detail += fmt::format("{} noisy {:.4f} (< {}) noiseless {:.2e} (< {}); ", to_string(family), noisy,
                              kMaxNoisyError, clean, kMaxNoiselessError);
    }
    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < kPredictionSeconds;
    report(1, pass, "prediction accuracy at horizon 10",
           detail + fmt::format("{} jobs per family, {:.2f} s (< {} s)", kJobsPerFamily, elapsed, kPredictionSeconds));
}

struct Paired {
    MetricsBundle slaq;
    MetricsBundle fair;
};

std::vector<Paired> paired_runs(double& elapsed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Paired> out;
    for (std::uint64_t seed : kSeeds) {
        SimConfig cfg;  // 160 jobs, 640 cores, 15 s mean interarrival, mixed families
        cfg.workload.seed = seed;
        Paired p;
        cfg.policy = Policy::Slaq;
        p.slaq = run_simulation(cfg);
        cfg.policy = Policy::Fair;
        p.fair = run_simulation(cfg);
        out.push_back(std::move(p));
    }
    elapsed = seconds_since(t0);
    return out;
}

void quality_improvement(const std::vector<Paired>& runs, double elapsed) {
    bool pass = elapsed < kPairedSeconds;
    std::string detail;
    double mean = 0.0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        const double s = time_averaged_loss(r.slaq, 0.0, r.slaq.arrivals_end_s).value_or(1.0);
        const double f = time_averaged_loss(r.fair, 0.0, r.fair.arrivals_end_s).value_or(0.0);
        const double reduction = 1.0 - s / f;
        mean += reduction / static_cast<double>(runs.size());
        pass = pass && s < f && reduction >= kMinLossReduction;
        detail += fmt::format("seed {} {:.4f} vs {:.4f} ({:.1f}% lower); ", kSeeds[i], s, f, 100.0 * reduction);
    }
    report(2, pass, "time-averaged normalized loss, SLAQ vs fair",
           detail + fmt::format("mean {:.1f}% (every seed >= {:.0f}%), {} paired runs in {:.1f} s (< {} s)",
                                100.0 * mean, 100.0 * kMinLossReduction, runs.size(), elapsed, kPairedSeconds));
}

void time_to_quality(const std::vector<Paired>& runs) {
    double s90 = 0.0, f90 = 0.0, s95 = 0.0, f95 = 0.0;
    std::size_t n90 = 0, n95 = 0;
    for (const auto& r : runs) {
        for (std::size_t i = 0; i < r.slaq.job_summaries.size(); ++i) {
            const JobSummary& a = r.slaq.job_summaries[i];
            const JobSummary& b = r.fair.job_summaries.at(i);
            if (a.job_id != b.job_id) throw std::logic_error("paired runs admitted different jobs");
            if (a.time_to_90pct_s && b.time_to_90pct_s) {
                s90 += *a.time_to_90pct_s;
                f90 += *b.time_to_90pct_s;
                ++n90;
            }
            if (a.time_to_95pct_s && b.time_to_95pct_s) {
                s95 += *a.time_to_95pct_s;
                f95 += *b.time_to_95pct_s;
                ++n95;
            }
        }
    }
    const double r90 = 1.0 - s90 / f90;
    const double r95 = 1.0 - s95 / f95;
    report(3, n90 > 0 && n95 > 0 && r90 >= kMinT90Reduction && r95 >= kMinT95Reduction, "time to 90% / 95% loss reduction",
           fmt::format("90%: {:.1f} s vs {:.1f} s, {:.1f}% lower (>= {:.0f}%) over {} jobs; "
                       "95%: {:.1f} s vs {:.1f} s, {:.1f}% lower (>= {:.0f}%) over {} jobs",
                       s90 / n90, f90 / n90, 100 * r90, 100 * kMinT90Reduction, n90, s95 / n95, f95 / n95, 100 * r95,
                       100 * kMinT95Reduction, n95));
}

void allocation_skew(const std::vector<Paired>& runs) {
    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        const ShareAverages s = time_averaged_shares(r.slaq, 0.0, r.slaq.arrivals_end_s);
        const ShareAverages f = time_averaged_shares(r.fair, 0.0, r.fair.arrivals_end_s);
        const double dev = std::max({std::abs(f.shares.high - f.fractions.high),
                                     std::abs(f.shares.medium - f.fractions.medium),
                                     std::abs(f.shares.low - f.fractions.low)});
        pass = pass && s.samples > 0 && f.samples > 0 && s.shares.high >= kMinHighShare &&
               s.shares.low <= kMaxLowShare && dev <= kFairShareSlack;
        detail += fmt::format("seed {} slaq {:.2f}/{:.2f}/{:.2f} fair {:.2f}/{:.2f}/{:.2f} (max dev {:.3f}); ", kSeeds[i],
                              s.shares.high, s.shares.medium, s.shares.low, f.shares.high, f.shares.medium,
                              f.shares.low, dev);
    }
    report(4, pass, "core share by loss group while arrivals continue",
           detail + fmt::format("bounds: slaq high >= {}, low <= {}; fair within {} of job fractions", kMinHighShare,
                                kMaxLowShare, kFairShareSlack));
}

double bench_p99(int jobs, int cores) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run({"bench-sched", "--jobs", std::to_string(jobs), "--cores", std::to_string(cores),
                               "--trials", "10", "--seed", "1"},
                              out, err);
    if (code != 0) throw std::runtime_error("bench-sched failed: " + err.str());
    std::smatch m;
    const std::string text = out.str();
    if (!std::regex_search(text, m, std::regex("p99_ms=([0-9.]+)"))) throw std::runtime_error("no p99 in output");
    return std::stod(m[1]);
}

void scheduler_latency() {
    const double large = bench_p99(4000, 16384);
    const double medium = bench_p99(1000, 4096);
    report(5, large < kLatencyLargeMs && medium < kLatencyMediumMs, "scheduler decision latency",
           fmt::format("4000 jobs / 16384 cores p99 {:.2f} ms (< {}); 1000 jobs / 4096 cores p99 {:.2f} ms (< {})",
                       large, kLatencyLargeMs, medium, kLatencyMediumMs));
}

void greedy_optimality() {
    std::mt19937_64 rng(6);
    int matched = 0;
    double worst = 0.0;
    for (int trial = 0; trial < kGreedyCases; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
        const int capacity = std::uniform_int_distribution<int>(static_cast<int>(n), 12)(rng);
        const auto inst = fixtures::random_instance(rng, n, capacity, true);
        std::vector<int> caps;
        for (const auto& c : inst.candidates) caps.push_back(c.cost.max_parallelism);
        const auto best = oracle::brute_force(n, capacity, caps, [&](std::size_t j, int a) {
            return fixtures::oracle_reduction(inst, j, a);
        });
        const AllocationPlan plan = allocate_slaq(inst.candidates, inst.spec);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += fixtures::oracle_reduction(inst, j, plan.cores_for(inst.states[j]->id));
        const double gap = std::abs(total - best.best_total) / std::max(best.best_total, 1e-300);
        worst = std::max(worst, gap);
        if (gap <= kGreedyTolerance) ++matched;
    }
    report(6, matched == kGreedyCases, "greedy allocation equals exhaustive optimum",
           fmt::format("{}/{} instances (<= 4 jobs, <= 12 cores), worst relative gap {:.1e}", matched, kGreedyCases,
                       worst));
}

void fit_recovery() {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::uint64_t> last(9, 40);
    int ok = 0;
    int total = 0;
    double worst = 0.0;
    for (CurveFamily family : {CurveFamily::Sublinear, CurveFamily::Exponential}) {
        WorkloadSpec spec;
        spec.sublinear_fraction = family == CurveFamily::Sublinear ? 1.0 : 0.0;
        spec.exponential_fraction = 1.0 - spec.sublinear_fraction;
        for (int i = 0; i < kRecoveryCasesPerFamily; ++i) {
            const JobProfile p = sample_profile(spec, rng());
            const std::uint64_t k_last = last(rng);
            std::function<double(double)> truth;
            if (const auto* s = std::get_if<SublinearFit>(&p.true_params)) {
                truth = [s = *s](double k) { return oracle::sublinear(s.a, s.b, s.c, s.d, k); };
            } else {
                const auto e = std::get<ExponentialFit>(p.true_params);
                truth = [e](double k) { return oracle::exponential(e.mu, e.b, e.c, k); };
            }
            const LossHistory h = oracle::history_of(truth, 0, k_last);
            const double target = static_cast<double>(k_last + 10);
            double predicted;
            try {
                predicted = family == CurveFamily::Sublinear ? fit_sublinear(h, FitConfig{}).evaluate(target)
                                                             : fit_exponential(h, FitConfig{}).evaluate(target);
            } catch (const FitError&) {
                predicted = std::numeric_limits<double>::infinity();
            }
            const double err = oracle::relative_error(predicted, truth(target));
            worst = std::max(worst, err);
            ok += err <= kRecoveryTolerance;
            ++total;
        }
    }
    report(7, ok == total, "noiseless fit recovery at k_latest + 10",
           fmt::format("{}/{} cases within {} relative error, worst {:.1e}", ok, total, kRecoveryTolerance, worst));
}

bool scale_invariance() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> factor(1e-3, 1e3);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
        auto inst = fixtures::random_instance(rng, n, 96, true);
        const AllocationPlan before = allocate_slaq(inst.candidates, inst.spec);
        const std::size_t j = trial % n;
        const double s = factor(rng);
        LossHistory scaled;
        for (const auto& r : inst.states[j]->history.records()) scaled.append({r.iteration, r.sim_time, r.loss * s});
        inst.states[j]->history = scaled;
        if (auto& m = inst.candidates[j].model) {
            if (auto* p = std::get_if<SublinearFit>(&m->params)) {
                *p = SublinearFit{p->a / s, p->b / s, p->c / s, p->d * s};
            } else {
                auto& e = std::get<ExponentialFit>(m->params);
                e.b -= std::log(s) / std::log(e.mu);
                e.c *= s;
            }
        }
        if (allocate_slaq(inst.candidates, inst.spec).assignments != before.assignments) return false;
    }
    return true;
}

bool plan_properties() {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
        const int capacity = std::uniform_int_distribution<int>(1, 300)(rng);
        const auto inst = fixtures::random_instance(rng, n, capacity, true);
        int cap_sum = 0;
        for (const auto& c : inst.candidates) cap_sum += c.cost.max_parallelism;
        const AllocationPlan greedy = allocate_slaq(inst.candidates, inst.spec);
        const AllocationPlan fair = allocate_fair(inst.candidates, inst.spec);
        for (const AllocationPlan* plan : {&greedy, &fair}) {
            if (plan->total() > capacity) return false;
            if (n <= static_cast<std::size_t>(capacity)) {
                if (plan->total() != std::min(capacity, cap_sum)) return false;
                for (const auto& [id, cores] : plan->assignments) {
                    if (cores < 1) return false;
                }
            }
        }
        if (n <= static_cast<std::size_t>(capacity)) {
            int lo = capacity + 1;
            int hi = -1;
            for (const auto& c : inst.candidates) {
                const int got = fair.cores_for(c.job->id);
                if (got >= c.cost.max_parallelism) continue;
                lo = std::min(lo, got);
                hi = std::max(hi, got);
            }
            if (hi >= 0 && hi - lo > 1) return false;
        }
    }
    return true;
}

bool deterministic() {
    SimConfig cfg;
    cfg.workload.n_jobs = 60;
    cfg.workload.seed = 99;
    cfg.workload.noise_sigma = {0.001, 0.005};
    for (Policy policy : {Policy::Slaq, Policy::Fair}) {
        cfg.policy = policy;
        const MetricsBundle a = run_simulation(cfg);
        const MetricsBundle b = run_simulation(cfg);
        if (a.time_series.size() != b.time_series.size() || a.job_summaries.size() != b.job_summaries.size()) return false;
        for (std::size_t i = 0; i < a.time_series.size(); ++i) {
            const auto& x = a.time_series[i];
            const auto& y = b.time_series[i];
            if (x.sim_time != y.sim_time || x.avg_normalized_loss != y.avg_normalized_loss ||
                x.running_jobs != y.running_jobs || x.shares.high != y.shares.high || x.shares.low != y.shares.low) {
                return false;
            }
        }
        for (std::size_t i = 0; i < a.job_summaries.size(); ++i) {
            const auto& x = a.job_summaries[i];
            const auto& y = b.job_summaries[i];
            if (x.job_id != y.job_id || x.time_to_90pct_s != y.time_to_90pct_s || x.completion_s != y.completion_s ||
                x.total_core_seconds != y.total_core_seconds) {
                return false;
            }
        }
    }
    return true;
}

double replay_gap() {
    double worst = 0.0;
    const auto gap = [&](const std::optional<double>& a, const std::optional<double>& b) {
        if (a.has_value() != b.has_value()) return std::numeric_limits<double>::infinity();
        return a ? std::abs(*a - *b) / std::max(1.0, std::abs(*b)) : 0.0;
    };
    for (Policy policy : {Policy::Slaq, Policy::Fair}) {
        SimConfig cfg;
        cfg.workload.n_jobs = 60;
        cfg.workload.seed = 5;
        cfg.workload.noise_sigma = {0.001, 0.005};
        cfg.policy = policy;
        Simulation sim(cfg, to_sim_jobs(generate_workload(cfg.workload)));
        const MetricsBundle original = sim.run();
        std::stringstream buf;
        write_trace(buf, sim.to_trace());
        const MetricsBundle replayed = replay_trace(parse_trace(buf), cfg);
        if (original.time_series.size() != replayed.time_series.size() ||
            original.job_summaries.size() != replayed.job_summaries.size()) {
            return std::numeric_limits<double>::infinity();
        }
        for (std::size_t i = 0; i < original.time_series.size(); ++i) {
            const auto& x = original.time_series[i];
            const auto& y = replayed.time_series[i];
            worst = std::max({worst, gap(x.sim_time, y.sim_time), gap(x.avg_normalized_loss, y.avg_normalized_loss),
                              gap(x.shares.high, y.shares.high), gap(x.shares.low, y.shares.low)});
        }
        for (std::size_t i = 0; i < original.job_summaries.size(); ++i) {
            const auto& x = original.job_summaries[i];
            const auto& y = replayed.job_summaries[i];
            worst = std::max({worst, gap(x.time_to_90pct_s, y.time_to_90pct_s), gap(x.time_to_95pct_s, y.time_to_95pct_s),
                              gap(x.completion_s, y.completion_s), gap(x.total_core_seconds, y.total_core_seconds)});
        }
    }
    return worst;
}

void property_suites() {
    const bool scale = scale_invariance();
    const bool plans = plan_properties();
    const bool det = deterministic();
    const double replay = replay_gap();
    report(8, scale && plans && det && replay <= kReplayTolerance, "property suites",
           fmt::format("scale invariance {}; capacity, starvation floor, fair max-min <= 1 {}; determinism {}; "
                       "trace replay worst gap {:.1e} (<= {})",
                       scale ? "ok" : "violated", plans ? "ok" : "violated", det ? "ok" : "violated", replay,
                       kReplayTolerance));
}

template <class F>
void guarded(int id, const char* name, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(id, false, name, fmt::format("threw: {}", e.what()));
    }
}

}  // namespace

int main() {
    guarded(1, "prediction accuracy at horizon 10", prediction_accuracy);
    double elapsed = 0.0;
    std::vector<Paired> runs;
    try {
        runs = paired_runs(elapsed);
    } catch (const std::exception& e) {
        for (int id : {2, 3, 4}) report(id, false, "paired policy runs", fmt::format("threw: {}", e.what()));
    }
    if (!runs.empty()) {
        guarded(2, "time-averaged normalized loss, SLAQ vs fair", [&] { quality_improvement(runs, elapsed); });
        guarded(3, "time to 90% / 95% loss reduction", [&] { time_to_quality(runs); });
        guarded(4, "core share by loss group while arrivals continue", [&] { allocation_skew(runs); });
    }
    guarded(5, "scheduler decision latency", scheduler_latency);
    guarded(6, "greedy allocation equals exhaustive optimum", greedy_optimality);
    guarded(7, "noiseless fit recovery at k_latest + 10", fit_recovery);
    guarded(8, "property suites", property_suites);
    fmt::print("{} of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
