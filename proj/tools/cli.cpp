#include "cli.hpp"

#include <slaq/config.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <random>

namespace slaq::cli {

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SimOptions {
    std::string config = "default";
    std::string policy;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    std::optional<std::size_t> n_jobs;
    std::optional<int> capacity;
    std::optional<double> mean_interarrival;
    std::optional<double> epoch_length;
    std::optional<double> metrics_interval;
    std::string output;
    bool family_hints = false;
    bool export_trace = false;
    bool print_config = false;
};

struct FitOptions {
    std::string trace;
    std::string family = "auto";
    std::size_t horizon = 10;
    std::optional<double> decay;
    std::optional<std::size_t> min_history;
};

struct BenchOptions {
    std::size_t jobs = 1000;
    int cores = 4096;
    std::size_t trials = 5;
    std::uint64_t seed = 1;
};

void add_run_flags(CLI::App& cmd, SimOptions& o) {
    cmd.add_option("--config", o.config, "JSON config file, or 'default'");
    cmd.add_option("--policy", o.policy, "slaq, fair or both")->check(CLI::IsMember({"slaq", "fair", "both"}));
    cmd.add_option("--duration", o.duration, "Simulated seconds");
    cmd.add_option("--capacity", o.capacity, "Cluster cores");
    cmd.add_option("--epoch-length", o.epoch_length, "Scheduling epoch in seconds");
    cmd.add_option("--metrics-interval", o.metrics_interval, "Sampling period in seconds (0 = every epoch)");
    cmd.add_option("--output", o.output, "Output directory");
    cmd.add_flag("--family-hints", o.family_hints, "Use declared optimizer families when fitting");
    cmd.add_flag("--print-config", o.print_config, "Print the effective config as JSON and exit");
}

RunConfig effective_config(const SimOptions& o) {
    RunConfig rc = load_run_config(o.config);
    SimConfig& sim = rc.sim;
    if (o.seed) sim.workload.seed = *o.seed;
    if (o.duration) sim.duration = *o.duration;
    if (o.n_jobs) sim.workload.n_jobs = *o.n_jobs;
    if (o.capacity) sim.cluster.capacity = *o.capacity;
    if (o.mean_interarrival) sim.workload.mean_interarrival = *o.mean_interarrival;
    if (o.epoch_length) sim.cluster.epoch_length = *o.epoch_length;
    if (o.metrics_interval) sim.metrics_interval = *o.metrics_interval;
    if (o.family_hints) sim.use_family_hints = true;
    if (!o.output.empty()) rc.output_dir = o.output;
    if (o.policy == "slaq" || o.policy == "fair") sim.policy = *parse_policy(o.policy);
    try {
        sim.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return rc;
}

std::vector<Policy> policies_for(const SimOptions& o, const RunConfig& rc) {
    if (o.policy == "both") return {Policy::Slaq, Policy::Fair};
    return {rc.sim.policy};
}

std::string opt(const std::optional<double>& v, std::string_view unit = "") {
    return v ? fmt::format("{:.4g}{}", *v, unit) : std::string("n/a");
}

void print_summary(std::ostream& out, Policy policy, const MetricsBundle& bundle,
                   const std::filesystem::path& dir) {
    const auto avg = time_averaged_loss(bundle, 0.0, bundle.arrivals_end_s);
    double t90_sum = 0.0;
    std::size_t t90_count = 0;
    std::size_t completed = 0;
    for (const auto& j : bundle.job_summaries) {
        if (j.time_to_90pct_s) {
            t90_sum += *j.time_to_90pct_s;
            ++t90_count;
        }
        if (j.completion_s) ++completed;
    }
    std::vector<double> latencies;
    for (const auto& l : bundle.scheduler_latencies) latencies.push_back(l.millis);
    const auto mean_t90 = t90_count ? std::optional(t90_sum / static_cast<double>(t90_count)) : std::nullopt;
    const auto p50 = latencies.empty() ? std::nullopt : std::optional(percentile(latencies, 50));
    const auto p99 = latencies.empty() ? std::nullopt : std::optional(percentile(latencies, 99));

    fmt::print(out,
               "{}: {} jobs admitted, {} completed. Time-averaged normalized loss over the arrival "
               "window [0, {:.0f}] s: {}. Mean time to 90% loss reduction: {} ({} jobs reached it). "
               "Scheduler latency p50 {}, p99 {}. CSV files in {}\n",
               to_string(policy), bundle.job_summaries.size(), completed, bundle.arrivals_end_s,
               opt(avg), opt(mean_t90, " s"), t90_count, opt(p50, " ms"), opt(p99, " ms"), dir.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

int cmd_simulate(const SimOptions& o, std::ostream& out) {
    const RunConfig rc = effective_config(o);
    if (o.print_config) {
        out << dump_run_config(rc);
        return kExitOk;
    }
    const auto workload = generate_workload(rc.sim.workload);
    fmt::print(out, "workload seed={} jobs={} hash={:016x}\n", rc.sim.workload.seed, workload.size(),
               workload_hash(workload));

    for (Policy policy : policies_for(o, rc)) {
        RunConfig run = rc;
        run.sim.policy = policy;
        const auto dir = rc.output_dir / std::string(to_string(policy));
        Simulation sim(run.sim, to_sim_jobs(workload));
        const MetricsBundle bundle = sim.run();
        export_csv(bundle, dir);
        run.output_dir = dir;
        write_text(dir / "config.json", dump_run_config(run));
        if (o.export_trace) write_trace(dir / "trace.csv", sim.to_trace());
        print_summary(out, policy, bundle, dir);
    }
    return kExitOk;
}

int cmd_replay(const SimOptions& o, const std::string& trace_path, std::ostream& out) {
    const RunConfig rc = effective_config(o);
    LossTrace trace;
    try {
        trace = read_trace(trace_path);
    } catch (const TraceError& e) {
        throw UsageError(e.what());
    }
    fmt::print(out, "trace {} jobs={}\n", trace_path, trace.jobs.size());
    for (Policy policy : policies_for(o, rc)) {
        SimConfig cfg = rc.sim;
        cfg.policy = policy;
        const auto dir = rc.output_dir / std::string(to_string(policy));
        const MetricsBundle bundle = replay_trace(trace, cfg);
        export_csv(bundle, dir);
        print_summary(out, policy, bundle, dir);
    }
    return kExitOk;
}

std::string describe(const CurveParams& params) {
    if (const auto* s = std::get_if<SublinearFit>(&params)) {
        return fmt::format("a={:.6g} b={:.6g} c={:.6g} d={:.6g}", s->a, s->b, s->c, s->d);
    }
    const auto& e = std::get<ExponentialFit>(params);
    return fmt::format("mu={:.6g} b={:.6g} c={:.6g}", e.mu, e.b, e.c);
}

int cmd_fit(const FitOptions& o, std::ostream& out) {
    LossTrace trace;
    try {
        trace = read_trace(o.trace);
    } catch (const TraceError& e) {
        throw UsageError(e.what());
    }
    FitConfig cfg;
    if (o.decay) cfg.decay = *o.decay;
    if (o.min_history) cfg.min_history = *o.min_history;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const std::optional<CurveFamily> hint = o.family == "auto" ? std::nullopt : parse_family(o.family);

    for (const auto& job : trace.jobs) {
        LossHistory history;
        double t = job.arrival_s;
        for (std::size_t i = 0; i < job.iterations.size(); ++i) {
            if (i > 0) t += job.core_seconds[i];
            history.append({job.iterations[i], t, job.losses[i]});
        }
        FittedModel model;
        try {
            model = select_model(history, cfg, hint);
        } catch (const FitError& e) {
            fmt::print(out, "job_id={} status=error points={} diagnostic=\"{}\"\n", to_int(job.id),
                       history.size(), e.what());
            continue;
        }
        std::string backtest;
        try {
            backtest = fmt::format("{:.6g}", backtest_error(history, cfg, o.horizon, hint));
        } catch (const FitError& e) {
            backtest = fmt::format("n/a backtest_diagnostic=\"{}\"", e.what());
        }
        fmt::print(out, "job_id={} status=ok family={} {} weighted_rms={:.6g} points={} horizon={} "
                        "backtest_error={}\n",
                   to_int(job.id), to_string(model.family), describe(model.params),
                   model.weighted_rms_residual, model.n_points, o.horizon, backtest);
    }
    return kExitOk;
}

std::uint64_t fnv(std::uint64_t h, double v) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof v; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

int cmd_bench(const BenchOptions& o, std::ostream& out) {
    if (o.jobs < 1) throw UsageError("--jobs must be >= 1");
    if (o.cores < 1 || static_cast<std::size_t>(o.cores) < o.jobs) throw UsageError("--cores must be >= --jobs");
    if (o.trials < 1) throw UsageError("--trials must be >= 1");

    const WorkloadSpec spec;
    std::mt19937_64 rng(o.seed);
    std::vector<JobState> states(o.jobs);
    std::vector<Candidate> candidates(o.jobs);
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < o.jobs; ++i) {
        const JobProfile profile = sample_profile(spec, rng());
        const auto done = std::uniform_int_distribution<std::uint64_t>(5, 200)(rng);
        JobState& st = states[i];
        st.id = JobId{static_cast<std::uint32_t>(i)};
        for (std::uint64_t k = 0; k <= done; ++k) {
            st.history.append({k, static_cast<double>(k), true_loss(profile, static_cast<double>(k))});
        }
        st.progress = static_cast<double>(done);
        st.phase = Phase::Running;
        candidates[i].job = &st;
        candidates[i].cost = profile.cost;
        candidates[i].model = FittedModel{profile.family, profile.true_params, 0.0, st.history.size()};
        digest = fnv(digest, static_cast<double>(done));
        digest = fnv(digest, evaluate(profile.true_params, 1.0));
        digest = fnv(digest, profile.cost.work_per_iteration);
    }

    const ClusterSpec cluster{o.cores, 2.0};
    std::vector<double> millis;
    for (std::size_t trial = 0; trial < o.trials; ++trial) {
        const auto start = std::chrono::steady_clock::now();
        const AllocationPlan plan = allocate_slaq(candidates, cluster, static_cast<std::int64_t>(trial));
        const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
        millis.push_back(elapsed.count());
        fmt::print(out, "trial={} millis={:.3f} granted_cores={}\n", trial + 1, elapsed.count(), plan.total());
    }
    const double mean = std::accumulate(millis.begin(), millis.end(), 0.0) / static_cast<double>(millis.size());
    fmt::print(out, "summary jobs={} cores={} trials={} inputs={:016x} mean_ms={:.3f} p50_ms={:.3f} p99_ms={:.3f}\n",
               o.jobs, o.cores, o.trials, digest, mean, percentile(millis, 50), percentile(millis, 99));
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quality-driven cluster scheduling simulator", "slaq"};
    app.require_subcommand(1);

    SimOptions sim_opts;
    auto* simulate = app.add_subcommand("simulate", "Simulate a synthetic workload");
    add_run_flags(*simulate, sim_opts);
    simulate->add_option("--seed", sim_opts.seed, "Workload seed");
    simulate->add_option("--n-jobs", sim_opts.n_jobs, "Number of jobs");
    simulate->add_option("--mean-interarrival", sim_opts.mean_interarrival, "Mean gap between arrivals (s)");
    simulate->add_flag("--export-trace", sim_opts.export_trace, "Also write trace.csv of reported losses");

    SimOptions replay_opts;
    std::string replay_trace_path;
    auto* replay = app.add_subcommand("replay", "Simulate jobs whose losses come from a trace file");
    add_run_flags(*replay, replay_opts);
    replay->add_option("trace", replay_trace_path, "Loss-trace CSV")->required();

    FitOptions fit_opts;
    auto* fit = app.add_subcommand("fit", "Fit loss curves of every job in a trace file");
    fit->add_option("trace", fit_opts.trace, "Loss-trace CSV")->required();
    fit->add_option("--family", fit_opts.family, "auto, sublinear or exponential")
        ->check(CLI::IsMember({"auto", "sublinear", "exponential"}));
    fit->add_option("--horizon", fit_opts.horizon, "Backtest horizon in iterations");
    fit->add_option("--decay", fit_opts.decay, "Weight decay per iteration of distance");
    fit->add_option("--min-history", fit_opts.min_history, "Minimum records before fitting");

    BenchOptions bench_opts;
    auto* bench = app.add_subcommand("bench-sched", "Time allocation decisions on synthetic fitted jobs");
    bench->add_option("--jobs", bench_opts.jobs, "Concurrent jobs");
    bench->add_option("--cores", bench_opts.cores, "Cluster cores");
    bench->add_option("--trials", bench_opts.trials, "Timed allocations");
    bench->add_option("--seed", bench_opts.seed, "Input seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_opts, out);
        if (replay->parsed()) return cmd_replay(replay_opts, replay_trace_path, out);
        if (fit->parsed()) return cmd_fit(fit_opts, out);
        return cmd_bench(bench_opts, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace slaq::cli
