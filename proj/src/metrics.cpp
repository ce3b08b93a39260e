#include <slaq/metrics.hpp>

#include "csv.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace slaq {

namespace {

// Absolute slack on threshold comparisons so that e.g. 1 - 0.9 still admits
// a loss of exactly 0.1.
constexpr double kThresholdSlack = 1e-12;

std::string optional_number(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string{};
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path,
                                                std::string_view header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != header) {
        throw std::runtime_error(fmt::format("{}: unexpected header", path.string()));
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (csv::trim(line).empty()) continue;
        std::vector<std::string> row;
        for (auto f : csv::split(csv::trim(line))) row.emplace_back(f);
        rows.push_back(std::move(row));
    }
    return rows;
}

double number_at(const std::vector<std::string>& row, std::size_t i, const std::filesystem::path& p) {
    auto v = i < row.size() ? csv::parse<double>(row[i]) : std::nullopt;
    if (!v) throw std::runtime_error(fmt::format("{}: bad numeric field {}", p.string(), i));
    return *v;
}

std::optional<double> optional_at(const std::vector<std::string>& row, std::size_t i,
                                  const std::filesystem::path& p) {
    if (i >= row.size() || csv::trim(row[i]).empty()) return std::nullopt;
    return number_at(row, i, p);
}

constexpr std::string_view kTimeseriesHeader =
    "sim_time_s,avg_normalized_loss,running_jobs,share_high,share_medium,share_low";
constexpr std::string_view kJobsHeader =
    "job_id,arrival_s,family,time_to_90pct_s,time_to_95pct_s,completion_s,total_core_seconds";
constexpr std::string_view kLatencyHeader = "epoch,millis";

}  // namespace

std::string format_number(double value) { return fmt::format("{:.6g}", value); }

std::optional<double> avg_normalized_loss(std::span<const double> normalized_losses) {
    if (normalized_losses.empty()) return std::nullopt;
    const double sum = std::accumulate(normalized_losses.begin(), normalized_losses.end(), 0.0);
    return std::clamp(sum / static_cast<double>(normalized_losses.size()), 0.0, 1.0);
}

std::optional<double> time_to_fraction(std::span<const TrajectoryPoint> trajectory, double arrival_s,
                                       double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument(fmt::format("fraction {} outside (0, 1)", fraction));
    }
    if (trajectory.empty()) throw std::invalid_argument("empty trajectory");
    const double threshold = 1.0 - fraction + kThresholdSlack;
    if (trajectory.front().normalized_loss <= threshold) {
        return std::max(0.0, trajectory.front().sim_time - arrival_s);
    }
    for (std::size_t i = 1; i < trajectory.size(); ++i) {
        const auto& cur = trajectory[i];
        if (cur.normalized_loss > threshold) continue;
        const auto& prev = trajectory[i - 1];
        const double share = (prev.normalized_loss - threshold) /
                             (prev.normalized_loss - cur.normalized_loss);
        const double t = prev.sim_time + share * (cur.sim_time - prev.sim_time);
        return std::max(0.0, t - arrival_s);
    }
    return std::nullopt;
}

GroupSizes group_sizes(std::size_t n) noexcept {
    GroupSizes g;
    const std::size_t quarter = (n + 3) / 4;
    g.high = std::min(quarter, n);
    g.medium = std::min(quarter, n - g.high);
    g.low = n - g.high - g.medium;
    return g;
}

GroupShare group_shares(std::span<const RankedJob> running, const AllocationPlan& plan) {
    std::vector<RankedJob> ranked(running.begin(), running.end());
    std::sort(ranked.begin(), ranked.end(), [](const RankedJob& a, const RankedJob& b) {
        if (a.normalized_loss != b.normalized_loss) return a.normalized_loss > b.normalized_loss;
        return a.job_id < b.job_id;
    });
    const GroupSizes sizes = group_sizes(ranked.size());

    double high = 0.0;
    double medium = 0.0;
    double low = 0.0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const double cores = plan.cores_for(ranked[i].job_id);
        if (i < sizes.high) {
            high += cores;
        } else if (i < sizes.high + sizes.medium) {
            medium += cores;
        } else {
            low += cores;
        }
    }
    const double total = high + medium + low;
    if (total <= 0.0) return {};
    return {high / total, medium / total, low / total};
}

std::optional<double> time_averaged_loss(const MetricsBundle& bundle, double t0, double t1) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : bundle.time_series) {
        if (s.sim_time < t0 || s.sim_time > t1) continue;
        sum += s.avg_normalized_loss;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

ShareAverages time_averaged_shares(const MetricsBundle& bundle, double t0, double t1) {
    ShareAverages out;
    for (const auto& s : bundle.time_series) {
        if (s.sim_time < t0 || s.sim_time > t1 || s.running_jobs == 0) continue;
        if (s.shares.high + s.shares.medium + s.shares.low <= 0.0) continue;
        const auto n = static_cast<double>(s.running_jobs);
        out.shares.high += s.shares.high;
        out.shares.medium += s.shares.medium;
        out.shares.low += s.shares.low;
        out.fractions.high += static_cast<double>(s.high_jobs) / n;
        out.fractions.medium += static_cast<double>(s.medium_jobs) / n;
        out.fractions.low += static_cast<double>(s.low_jobs) / n;
        ++out.samples;
    }
    if (out.samples > 0) {
        const auto n = static_cast<double>(out.samples);
        for (GroupShare* g : {&out.shares, &out.fractions}) {
            g->high /= n;
            g->medium /= n;
            g->low /= n;
        }
    }
    return out;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double rank = std::ceil(std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size()));
    const auto idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
    return values[std::min(idx, values.size() - 1)];
}

void export_csv(const MetricsBundle& bundle, const std::filesystem::path& directory) {
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec) {
        throw std::runtime_error(
            fmt::format("cannot create directory {}: {}", directory.string(), ec.message()));
    }

    {
        const auto path = directory / "timeseries.csv";
        auto out = open_for_write(path);
        out << kTimeseriesHeader << '\n';
        for (const auto& s : bundle.time_series) {
            out << fmt::format("{},{},{},{},{},{}\n", format_number(s.sim_time),
                               format_number(s.avg_normalized_loss), s.running_jobs,
                               format_number(s.shares.high), format_number(s.shares.medium),
                               format_number(s.shares.low));
        }
        finish(out, path);
    }
    {
        const auto path = directory / "jobs.csv";
        auto jobs = bundle.job_summaries;
        std::sort(jobs.begin(), jobs.end(),
                  [](const JobSummary& a, const JobSummary& b) { return a.job_id < b.job_id; });
        auto out = open_for_write(path);
        out << kJobsHeader << '\n';
        for (const auto& j : jobs) {
            out << fmt::format("{},{},{},{},{},{},{}\n", to_int(j.job_id), format_number(j.arrival_s),
                               j.family, optional_number(j.time_to_90pct_s),
                               optional_number(j.time_to_95pct_s), optional_number(j.completion_s),
                               format_number(j.total_core_seconds));
        }
        finish(out, path);
    }
    {
        const auto path = directory / "sched_latency.csv";
        auto out = open_for_write(path);
        out << kLatencyHeader << '\n';
        for (const auto& l : bundle.scheduler_latencies) {
            out << fmt::format("{},{}\n", l.epoch, format_number(l.millis));
        }
        finish(out, path);
    }
}

MetricsBundle import_csv(const std::filesystem::path& directory) {
    MetricsBundle bundle;
    {
        const auto path = directory / "timeseries.csv";
        for (const auto& row : read_rows(path, kTimeseriesHeader)) {
            TimeSample s;
            s.sim_time = number_at(row, 0, path);
            s.avg_normalized_loss = number_at(row, 1, path);
            s.running_jobs = static_cast<std::size_t>(number_at(row, 2, path));
            s.shares = {number_at(row, 3, path), number_at(row, 4, path), number_at(row, 5, path)};
            bundle.time_series.push_back(s);
        }
    }
    {
        const auto path = directory / "jobs.csv";
        for (const auto& row : read_rows(path, kJobsHeader)) {
            if (row.size() != 7) throw std::runtime_error(fmt::format("{}: bad row", path.string()));
            JobSummary j;
            auto id = csv::parse<std::uint32_t>(row[0]);
            if (!id) throw std::runtime_error(fmt::format("{}: bad job id", path.string()));
            j.job_id = JobId{*id};
            j.arrival_s = number_at(row, 1, path);
            j.family = row[2];
            j.time_to_90pct_s = optional_at(row, 3, path);
            j.time_to_95pct_s = optional_at(row, 4, path);
            j.completion_s = optional_at(row, 5, path);
            j.total_core_seconds = number_at(row, 6, path);
            bundle.job_summaries.push_back(std::move(j));
        }
    }
    {
        const auto path = directory / "sched_latency.csv";
        for (const auto& row : read_rows(path, kLatencyHeader)) {
            auto epoch = row.empty() ? std::nullopt : csv::parse<std::int64_t>(row[0]);
            if (!epoch) throw std::runtime_error(fmt::format("{}: bad epoch", path.string()));
            bundle.scheduler_latencies.push_back({*epoch, number_at(row, 1, path)});
        }
    }
    return bundle;
}

}  // namespace slaq
