#include <slaq/trace.hpp>

#include "csv.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>

namespace slaq {

namespace {

constexpr std::string_view kHeader = "job_id,iteration,loss,core_seconds_per_iteration,arrival_s";

[[noreturn]] void fail(std::size_t line, std::string_view what) {
    throw TraceError(fmt::format("trace line {}: {}", line, what));
}

void parse_metadata(std::string_view body, std::size_t line, std::map<std::uint32_t, TraceJob>& jobs) {
    std::optional<std::uint32_t> id;
    std::vector<std::pair<std::string_view, std::string_view>> pairs;
    for (auto token : csv::split(csv::trim(body), ' ')) {
        if (token.empty()) continue;
        const auto eq = token.find('=');
        if (eq == std::string_view::npos) fail(line, fmt::format("metadata token '{}' lacks '='", token));
        const auto key = token.substr(0, eq);
        const auto value = token.substr(eq + 1);
        if (key == "job_id") {
            id = csv::parse<std::uint32_t>(value);
            if (!id) fail(line, "bad metadata job_id");
        } else {
            pairs.emplace_back(key, value);
        }
    }
    if (!id) fail(line, "metadata without job_id");
    TraceJob& job = jobs[*id];
    job.id = JobId{*id};
    for (auto [key, value] : pairs) {
        if (key == "asymptote") {
            job.asymptote = csv::parse<double>(value);
            if (!job.asymptote) fail(line, "bad asymptote");
        } else if (key == "max_parallelism") {
            job.max_parallelism = csv::parse<int>(value);
            if (!job.max_parallelism || *job.max_parallelism < 1) fail(line, "bad max_parallelism");
        } else if (key == "family") {
            job.family = parse_family(value);
            if (!job.family) fail(line, "bad family");
        } else if (key == "max_iterations") {
            job.max_iterations = csv::parse<std::int64_t>(value);
            if (!job.max_iterations || *job.max_iterations < 1) fail(line, "bad max_iterations");
        } else if (key == "convergence_epsilon") {
            job.convergence_epsilon = csv::parse<double>(value);
            if (!job.convergence_epsilon || !(*job.convergence_epsilon > 0.0)) {
                fail(line, "bad convergence_epsilon");
            }
        } else {
            fail(line, fmt::format("unknown metadata key '{}'", key));
        }
    }
}

}  // namespace

double TraceJob::loss_at(double k) const {
    if (iterations.empty()) throw std::logic_error("trace job without rows");
    const double first = static_cast<double>(iterations.front());
    const double last = static_cast<double>(iterations.back());
    if (k <= first) return losses.front();
    if (k >= last) return losses.back();
    auto it = std::upper_bound(iterations.begin(), iterations.end(), k,
                               [](double v, std::uint64_t it) { return v < static_cast<double>(it); });
    const auto hi = static_cast<std::size_t>(it - iterations.begin());
    const auto lo = hi - 1;
    const double k0 = static_cast<double>(iterations[lo]);
    if (k == k0) return losses[lo];
    const double k1 = static_cast<double>(iterations[hi]);
    const double t = (k - k0) / (k1 - k0);
    return losses[lo] + t * (losses[hi] - losses[lo]);
}

double TraceJob::work_per_iteration() const {
    if (core_seconds.empty()) throw std::logic_error("trace job without rows");
    if (std::all_of(core_seconds.begin(), core_seconds.end(),
                    [&](double v) { return v == core_seconds.front(); })) {
        return core_seconds.front();
    }
    double sum = 0.0;
    for (double v : core_seconds) sum += v;
    return sum / static_cast<double>(core_seconds.size());
}

LossTrace parse_trace(std::istream& in) {
    std::map<std::uint32_t, TraceJob> jobs;
    std::map<std::uint32_t, bool> has_rows;
    std::string raw;
    std::size_t line = 0;
    bool seen_header = false;

    while (std::getline(in, raw)) {
        ++line;
        std::string_view text = csv::trim(raw);
        if (line == 1 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
        if (text.empty()) continue;
        if (text.front() == '#') {
            if (text.substr(0, 2) == "#!") parse_metadata(text.substr(2), line, jobs);
            continue;
        }
        if (!seen_header) {
            if (text != kHeader) fail(line, fmt::format("expected header '{}'", kHeader));
            seen_header = true;
            continue;
        }

        const auto fields = csv::split(text);
        if (fields.size() != 5) fail(line, fmt::format("expected 5 fields, found {}", fields.size()));
        const auto id = csv::parse<std::uint32_t>(fields[0]);
        const auto iteration = csv::parse<std::uint64_t>(fields[1]);
        const auto loss = csv::parse<double>(fields[2]);
        const auto cost = csv::parse<double>(fields[3]);
        const auto arrival = csv::parse<double>(fields[4]);
        if (!id) fail(line, "bad job_id");
        if (!iteration) fail(line, "bad iteration");
        if (!loss || !std::isfinite(*loss)) fail(line, "bad loss");
        if (!cost || !(*cost > 0.0)) fail(line, "core_seconds_per_iteration must be a positive number");
        if (!arrival || !(*arrival >= 0.0)) fail(line, "bad arrival_s");

        TraceJob& job = jobs[*id];
        if (!has_rows[*id]) {
            job.id = JobId{*id};
            job.arrival_s = *arrival;
            has_rows[*id] = true;
        } else {
            if (*iteration <= job.iterations.back()) {
                fail(line, fmt::format("iteration {} of job {} does not increase", *iteration, *id));
            }
            if (*arrival != job.arrival_s) fail(line, fmt::format("arrival_s of job {} changes", *id));
        }
        job.iterations.push_back(*iteration);
        job.losses.push_back(*loss);
        job.core_seconds.push_back(*cost);
    }

    if (!seen_header) throw TraceError("trace is empty");
    LossTrace trace;
    for (auto& [id, job] : jobs) {
        if (!has_rows[id]) throw TraceError(fmt::format("metadata for job {} without rows", id));
        trace.jobs.push_back(std::move(job));
    }
    if (trace.jobs.empty()) throw TraceError("trace has no rows");
    return trace;
}

LossTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TraceError(fmt::format("cannot read trace {}", path.string()));
    return parse_trace(in);
}

void write_trace(std::ostream& out, const LossTrace& trace) {
    for (const auto& job : trace.jobs) {
        std::string meta = fmt::format("#! job_id={}", to_int(job.id));
        if (job.asymptote) meta += fmt::format(" asymptote={:.17g}", *job.asymptote);
        if (job.max_parallelism) meta += fmt::format(" max_parallelism={}", *job.max_parallelism);
        if (job.family) meta += fmt::format(" family={}", to_string(*job.family));
        if (job.max_iterations) meta += fmt::format(" max_iterations={}", *job.max_iterations);
        if (job.convergence_epsilon) {
            meta += fmt::format(" convergence_epsilon={:.17g}", *job.convergence_epsilon);
        }
        out << meta << '\n';
    }
    out << kHeader << '\n';
    for (const auto& job : trace.jobs) {
        for (std::size_t i = 0; i < job.iterations.size(); ++i) {
            out << fmt::format("{},{},{:.17g},{:.17g},{:.17g}\n", to_int(job.id), job.iterations[i],
                               job.losses[i], job.core_seconds[i], job.arrival_s);
        }
    }
}

void write_trace(const std::filesystem::path& path, const LossTrace& trace) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write trace {}", path.string()));
    write_trace(out, trace);
    out.flush();
    if (!out) throw std::runtime_error(fmt::format("failed writing trace {}", path.string()));
}

}  // namespace slaq
