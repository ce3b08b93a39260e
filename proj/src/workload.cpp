#include <slaq/workload.hpp>

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace slaq {

double true_loss(const JobProfile& profile, double k) {
    if (!(k >= 0.0)) throw std::invalid_argument(fmt::format("true loss at negative iteration {}", k));
    return evaluate(profile.true_params, k);
}

JobProfile make_sublinear_profile(double range, double asymptote, double linear, double quadratic,
                                  CostModel cost) {
    if (!(range > 0.0)) throw std::invalid_argument("profile loss range must be > 0");
    if (linear < 0.0 || quadratic < 0.0 || linear + quadratic <= 0.0) {
        throw std::invalid_argument("sublinear profile needs non-negative rates, not both zero");
    }
    JobProfile p;
    p.family = CurveFamily::Sublinear;
    p.true_params = SublinearFit{quadratic / range, linear / range, 1.0 / range, asymptote};
    p.initial_loss = evaluate(p.true_params, 0.0);
    p.cost = cost;
    return p;
}

JobProfile make_exponential_profile(double range, double asymptote, double mu, CostModel cost) {
    if (!(range > 0.0)) throw std::invalid_argument("profile loss range must be > 0");
    if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("exponential profile needs 0 < mu < 1");
    JobProfile p;
    p.family = CurveFamily::Exponential;
    // mu^(-b) = range
    p.true_params = ExponentialFit{mu, -std::log(range) / std::log(mu), asymptote};
    p.initial_loss = evaluate(p.true_params, 0.0);
    p.cost = cost;
    return p;
}

namespace {

void check_interval(const Interval& iv, std::string_view name, double floor, bool strict_floor) {
    const bool ok_floor = strict_floor ? iv.lo > floor : iv.lo >= floor;
    if (!ok_floor || !(iv.hi >= iv.lo) || !std::isfinite(iv.hi)) {
        throw std::invalid_argument(fmt::format("workload range {} = [{}, {}] is invalid", name,
                                                iv.lo, iv.hi));
    }
}

double draw(std::mt19937_64& rng, const Interval& iv) {
    if (iv.hi == iv.lo) return iv.lo;
    return std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
}

double draw_log(std::mt19937_64& rng, const Interval& iv) {
    if (iv.hi == iv.lo) return iv.lo;
    return std::exp(std::uniform_real_distribution<double>(std::log(iv.lo), std::log(iv.hi))(rng));
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <class T>
std::uint64_t mix(std::uint64_t h, T value) {
    return fnv1a(h, &value, sizeof value);
}

}  // namespace

void WorkloadSpec::validate() const {
    if (!(mean_interarrival > 0.0)) throw std::invalid_argument("mean_interarrival must be > 0");
    if (sublinear_fraction < 0.0 || exponential_fraction < 0.0 ||
        std::abs(sublinear_fraction + exponential_fraction - 1.0) > 1e-9) {
        throw std::invalid_argument("family mix fractions must be >= 0 and sum to 1");
    }
    check_interval(loss_range, "loss_range", 0.0, true);
    check_interval(asymptote_ratio, "asymptote_ratio", 0.0, false);
    check_interval(sublinear_linear, "sublinear_linear", 0.0, false);
    check_interval(sublinear_quadratic, "sublinear_quadratic", 0.0, false);
    if (sublinear_linear.lo + sublinear_quadratic.lo <= 0.0) {
        throw std::invalid_argument("sublinear rates must not both allow zero");
    }
    check_interval(exponential_mu, "exponential_mu", 0.0, true);
    if (!(exponential_mu.hi < 1.0)) throw std::invalid_argument("exponential_mu must stay below 1");
    check_interval(work_per_iteration, "work_per_iteration", 0.0, true);
    check_interval(max_parallelism, "max_parallelism", 1.0, false);
    check_interval(noise_sigma, "noise_sigma", 0.0, false);
    if (!(noise_sigma.hi < 0.05)) throw std::invalid_argument("noise_sigma must stay below 0.05");
    if (!(convergence_epsilon > 0.0)) throw std::invalid_argument("convergence_epsilon must be > 0");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
}

JobProfile sample_profile(const WorkloadSpec& spec, std::uint64_t rng_seed) {
    std::mt19937_64 rng(rng_seed);
    const bool sublinear =
        std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.sublinear_fraction;
    const double range = draw(rng, spec.loss_range);
    const double asymptote = draw(rng, spec.asymptote_ratio) * range;

    CostModel cost;
    cost.work_per_iteration = draw_log(rng, spec.work_per_iteration);
    cost.max_parallelism = static_cast<int>(std::uniform_int_distribution<long>(
        std::lround(spec.max_parallelism.lo), std::lround(spec.max_parallelism.hi))(rng));

    JobProfile profile;
    if (sublinear) {
        const double linear = draw(rng, spec.sublinear_linear);
        const double quadratic = draw(rng, spec.sublinear_quadratic);
        profile = make_sublinear_profile(range, asymptote, linear, quadratic, cost);
    } else {
        profile = make_exponential_profile(range, asymptote, draw(rng, spec.exponential_mu), cost);
    }
    profile.noise_sigma = draw(rng, spec.noise_sigma);
    profile.convergence_epsilon = spec.convergence_epsilon;
    profile.max_iterations = spec.max_iterations;
    return profile;
}

std::vector<WorkloadJob> generate_workload(const WorkloadSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::exponential_distribution<double> gap(1.0 / spec.mean_interarrival);

    std::vector<WorkloadJob> jobs;
    jobs.reserve(spec.n_jobs);
    double t = 0.0;
    for (std::size_t i = 0; i < spec.n_jobs; ++i) {
        if (i > 0) t += gap(rng);
        // Each profile gets its own stream so arrival draws never shift it.
        jobs.push_back({JobId{static_cast<std::uint32_t>(i)}, t, sample_profile(spec, rng())});
    }
    return jobs;
}

std::uint64_t workload_hash(const std::vector<WorkloadJob>& jobs) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& j : jobs) {
        h = mix(h, to_int(j.id));
        h = mix(h, j.arrival_s);
        h = mix(h, static_cast<int>(j.profile.family));
        std::visit(
            [&](const auto& p) {
                if constexpr (std::is_same_v<std::decay_t<decltype(p)>, SublinearFit>) {
                    h = mix(mix(mix(mix(h, p.a), p.b), p.c), p.d);
                } else {
                    h = mix(mix(mix(h, p.mu), p.b), p.c);
                }
            },
            j.profile.true_params);
        h = mix(h, j.profile.cost.work_per_iteration);
        h = mix(h, j.profile.cost.max_parallelism);
        h = mix(h, j.profile.noise_sigma);
        h = mix(h, j.profile.convergence_epsilon);
        h = mix(h, j.profile.max_iterations);
    }
    return h;
}

}  // namespace slaq
