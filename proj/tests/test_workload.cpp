#include <slaq/trace.hpp>
#include <slaq/workload.hpp>

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace slaq;

TEST_CASE("true_loss examples") {
    JobProfile sub;
    sub.family = CurveFamily::Sublinear;
    sub.true_params = SublinearFit{0, 1, 1, 0};
    CHECK(true_loss(sub, 3) == doctest::Approx(0.25));

    JobProfile expo;
    expo.family = CurveFamily::Exponential;
    expo.true_params = ExponentialFit{0.5, 0, 0};
    CHECK(true_loss(expo, 2) == doctest::Approx(0.25));
    CHECK_THROWS(true_loss(expo, -1));
}

TEST_CASE("profile builders start at asymptote + range") {
    const CostModel cost{2.0, 8};
    const JobProfile s = make_sublinear_profile(4.0, 1.5, 0.7, 0.02, cost);
    CHECK(true_loss(s, 0) == doctest::Approx(5.5));
    CHECK(s.initial_loss == true_loss(s, 0));
    CHECK(s.asymptote() == 1.5);
    CHECK(true_loss(s, 10) == doctest::Approx(oracle::sublinear(0.02 / 4, 0.7 / 4, 0.25, 1.5, 10)));

    const JobProfile e = make_exponential_profile(3.0, 0.6, 0.8, cost);
    CHECK(true_loss(e, 0) == doctest::Approx(3.6));
    CHECK(true_loss(e, 5) == doctest::Approx(3.0 * std::pow(0.8, 5) + 0.6));

    CHECK_THROWS(make_sublinear_profile(0.0, 0.0, 1.0, 0.0, cost));
    CHECK_THROWS(make_sublinear_profile(1.0, 0.0, 0.0, 0.0, cost));
    CHECK_THROWS(make_exponential_profile(1.0, 0.0, 1.0, cost));
}

TEST_CASE("generate_workload is deterministic") {
    WorkloadSpec spec;
    spec.seed = 42;
    const auto a = generate_workload(spec);
    const auto b = generate_workload(spec);
    REQUIRE(a.size() == 160);
    CHECK(workload_hash(a) == workload_hash(b));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].arrival_s == b[i].arrival_s);
        CHECK(a[i].profile.initial_loss == b[i].profile.initial_loss);
    }
    spec.seed = 43;
    CHECK(workload_hash(generate_workload(spec)) != workload_hash(a));
}

TEST_CASE("arrival gaps follow the configured mean") {
    WorkloadSpec spec;
    double total_mean = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        spec.seed = seed;
        const auto jobs = generate_workload(spec);
        CHECK(jobs.front().arrival_s == 0.0);
        for (std::size_t i = 1; i < jobs.size(); ++i) CHECK(jobs[i].arrival_s >= jobs[i - 1].arrival_s);
        const double mean_gap = jobs.back().arrival_s / static_cast<double>(jobs.size() - 1);
        CHECK(std::abs(mean_gap - 15.0) / 15.0 < 0.2);
        total_mean += mean_gap;
    }
    // 159 gaps: expected last arrival 159 * 15 = 2385 s.
    CHECK(std::abs(total_mean / 20.0 * 159.0 - 2385.0) < 0.05 * 2385.0);
}

TEST_CASE("family mix and parameter ranges are respected") {
    WorkloadSpec spec;
    spec.sublinear_fraction = 1.0;
    spec.exponential_fraction = 0.0;
    for (const auto& j : generate_workload(spec)) {
        CHECK(j.profile.family == CurveFamily::Sublinear);
        CHECK(j.profile.loss_range() >= spec.loss_range.lo);
        CHECK(j.profile.loss_range() <= spec.loss_range.hi);
        CHECK(j.profile.cost.max_parallelism >= 64);
        CHECK(j.profile.cost.max_parallelism <= 256);
        CHECK(j.profile.noise_sigma <= spec.noise_sigma.hi);
        CHECK(j.profile.cost.work_per_iteration >= spec.work_per_iteration.lo);
        CHECK(j.profile.cost.work_per_iteration <= spec.work_per_iteration.hi);
    }
    spec.sublinear_fraction = 0.0;
    spec.exponential_fraction = 1.0;
    for (const auto& j : generate_workload(spec)) CHECK(j.profile.family == CurveFamily::Exponential);
}

TEST_CASE("WorkloadSpec validation") {
    WorkloadSpec spec;
    CHECK_NOTHROW(spec.validate());
    spec.sublinear_fraction = 0.7;
    CHECK_THROWS(spec.validate());
    spec = WorkloadSpec{};
    spec.mean_interarrival = 0.0;
    CHECK_THROWS(spec.validate());
    spec = WorkloadSpec{};
    spec.noise_sigma = {0.0, 0.06};
    CHECK_THROWS(spec.validate());
    spec = WorkloadSpec{};
    spec.exponential_mu = {0.5, 1.0};
    CHECK_THROWS(spec.validate());
}

TEST_CASE("trace parsing") {
    std::istringstream in(
        "# a comment\n"
        "job_id,iteration,loss,core_seconds_per_iteration,arrival_s\n"
        "2,0,5.0,10,3.5\n"
        "1,0,1.0,4,0\n"
        "2,2,3.0,10,3.5\n"
        "1,1,0.5,6,0\n");
    const LossTrace t = parse_trace(in);
    REQUIRE(t.jobs.size() == 2);
    CHECK(t.jobs[0].id == JobId{1});
    CHECK(t.jobs[1].arrival_s == 3.5);
    CHECK(t.jobs[1].loss_at(1.0) == doctest::Approx(4.0));
    CHECK(t.jobs[1].loss_at(0.5) == doctest::Approx(4.5));
    CHECK(t.jobs[1].loss_at(9.0) == 3.0);
    CHECK(t.jobs[0].work_per_iteration() == doctest::Approx(5.0));
    CHECK(t.jobs[1].work_per_iteration() == 10.0);
}

TEST_CASE("trace errors name the offending line") {
    const auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_trace(in);
    };
    const std::string header = "job_id,iteration,loss,core_seconds_per_iteration,arrival_s\n";
    CHECK_THROWS_WITH_AS(parse(""), "trace is empty", TraceError);
    CHECK_THROWS_WITH_AS(parse(header), "trace has no rows", TraceError);
    CHECK_THROWS_WITH_AS(parse("a,b\n"), doctest::Contains("line 1"), TraceError);
    CHECK_THROWS_WITH_AS(parse(header + "1,0,1.0,2,0\n1,x,1.0,2,0\n"), doctest::Contains("line 3"), TraceError);
    CHECK_THROWS_WITH_AS(parse(header + "1,0,1.0,2,0\n1,5,0.8,2,0\n1,5,0.7,2,0\n"),
                         doctest::Contains("line 4"), TraceError);
    CHECK_THROWS_WITH_AS(parse(header + "1,3,1.0,2,0\n1,2,0.9,2,0\n"), doctest::Contains("does not increase"),
                         TraceError);
    CHECK_THROWS_WITH_AS(parse(header + "1,0,1.0,2\n"), doctest::Contains("line 2"), TraceError);
    CHECK_THROWS_WITH_AS(parse(header + "1,0,1.0,-2,0\n"), doctest::Contains("line 2"), TraceError);
    CHECK_THROWS_WITH_AS(parse(header + "1,0,1.0,2,0\n1,1,0.9,2,7\n"), doctest::Contains("arrival_s"), TraceError);
    CHECK_THROWS_WITH_AS(parse("#! job_id=1 colour=red\n" + header + "1,0,1,1,0\n"), doctest::Contains("colour"),
                         TraceError);
    CHECK_THROWS_AS(read_trace("/nonexistent/trace.csv"), TraceError);
}

TEST_CASE("trace write and re-read is exact, metadata included") {
    LossTrace t;
    TraceJob j;
    j.id = JobId{9};
    j.arrival_s = 1.0 / 3.0;
    j.iterations = {0, 1, 2};
    j.losses = {std::sqrt(2.0), 1.0 / 7.0, 1e-300};
    j.core_seconds = {0.1, 0.1, 0.1};
    j.asymptote = 1.0 / 9.0;
    j.max_parallelism = 17;
    j.family = CurveFamily::Exponential;
    j.max_iterations = 99;
    j.convergence_epsilon = 1e-3;
    t.jobs.push_back(j);

    std::stringstream buf;
    write_trace(buf, t);
    const LossTrace back = parse_trace(buf);
    REQUIRE(back.jobs.size() == 1);
    const TraceJob& b = back.jobs[0];
    CHECK(b.arrival_s == j.arrival_s);
    CHECK(b.losses == j.losses);
    CHECK(b.core_seconds == j.core_seconds);
    CHECK(b.asymptote == j.asymptote);
    CHECK(b.max_parallelism == j.max_parallelism);
    CHECK(b.family == j.family);
    CHECK(b.max_iterations == j.max_iterations);
    CHECK(b.convergence_epsilon == j.convergence_epsilon);
}
