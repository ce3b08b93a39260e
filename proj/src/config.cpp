#include <slaq/config.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace slaq {

namespace {

using nlohmann::json;

using Handler = std::function<void(const json&, const std::string&)>;

void walk(const json& node, const std::string& where, const std::map<std::string, Handler>& handlers) {
    if (!node.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
    for (const auto& [key, value] : node.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        const auto it = handlers.find(key);
        if (it == handlers.end()) throw ConfigError(fmt::format("unknown config key '{}'", path));
        it->second(value, path);
    }
}

double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(fmt::format("{} must be a number", path));
    return v.get<double>();
}

template <class Int>
Int integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(fmt::format("{} must be an integer", path));
    if constexpr (std::is_unsigned_v<Int>) {
        if (v.is_number_unsigned()) return v.get<Int>();
        if (v.get<std::int64_t>() < 0) throw ConfigError(fmt::format("{} must be non-negative", path));
    }
    return v.get<Int>();
}

Interval interval(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ConfigError(fmt::format("{} must be a [low, high] pair of numbers", path));
    }
    return {v[0].get<double>(), v[1].get<double>()};
}

Handler set_number(double& target) {
    return [&target](const json& v, const std::string& p) { target = number(v, p); };
}

template <class Int>
Handler set_integer(Int& target) {
    return [&target](const json& v, const std::string& p) { target = integer<Int>(v, p); };
}

Handler set_interval(Interval& target) {
    return [&target](const json& v, const std::string& p) { target = interval(v, p); };
}

json pair(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
    }

    RunConfig cfg;
    SimConfig& sim = cfg.sim;
    WorkloadSpec& wl = sim.workload;

    const std::map<std::string, Handler> cluster = {
        {"capacity", set_integer(sim.cluster.capacity)},
        {"epoch_length_s", set_number(sim.cluster.epoch_length)},
    };
    const std::map<std::string, Handler> mix = {
        {"sublinear", set_number(wl.sublinear_fraction)},
        {"exponential", set_number(wl.exponential_fraction)},
    };
    const std::map<std::string, Handler> workload = {
        {"n_jobs", set_integer(wl.n_jobs)},
        {"mean_interarrival_s", set_number(wl.mean_interarrival)},
        {"seed", set_integer(wl.seed)},
        {"family_mix", [&](const json& v, const std::string& p) { walk(v, p, mix); }},
        {"loss_range", set_interval(wl.loss_range)},
        {"asymptote_ratio", set_interval(wl.asymptote_ratio)},
        {"sublinear_linear", set_interval(wl.sublinear_linear)},
        {"sublinear_quadratic", set_interval(wl.sublinear_quadratic)},
        {"exponential_mu", set_interval(wl.exponential_mu)},
        {"work_per_iteration", set_interval(wl.work_per_iteration)},
        {"max_parallelism", set_interval(wl.max_parallelism)},
        {"noise_sigma", set_interval(wl.noise_sigma)},
        {"convergence_epsilon", set_number(wl.convergence_epsilon)},
        {"max_iterations", set_integer(wl.max_iterations)},
    };
    const std::map<std::string, Handler> fit = {
        {"decay", set_number(sim.fit.decay)},
        {"min_history", set_integer(sim.fit.min_history)},
        {"max_refine_steps", set_integer(sim.fit.max_refine_steps)},
        {"refine_tolerance", set_number(sim.fit.refine_tolerance)},
    };
    const std::map<std::string, Handler> replay = {
        {"max_parallelism", set_integer(sim.replay.max_parallelism)},
        {"convergence_epsilon", set_number(sim.replay.convergence_epsilon)},
    };
    const std::map<std::string, Handler> top = {
        {"cluster", [&](const json& v, const std::string& p) { walk(v, p, cluster); }},
        {"policy",
         [&](const json& v, const std::string& p) {
             const auto policy = v.is_string() ? parse_policy(v.get<std::string>()) : std::nullopt;
             if (!policy) throw ConfigError(fmt::format("{} must be \"slaq\" or \"fair\"", p));
             sim.policy = *policy;
         }},
        {"duration_s", set_number(sim.duration)},
        {"metrics_interval_s", set_number(sim.metrics_interval)},
        {"use_family_hints",
         [&](const json& v, const std::string& p) {
             if (!v.is_boolean()) throw ConfigError(fmt::format("{} must be true or false", p));
             sim.use_family_hints = v.get<bool>();
         }},
        {"output_dir",
         [&](const json& v, const std::string& p) {
             if (!v.is_string()) throw ConfigError(fmt::format("{} must be a string", p));
             cfg.output_dir = v.get<std::string>();
         }},
        {"workload", [&](const json& v, const std::string& p) { walk(v, p, workload); }},
        {"fit", [&](const json& v, const std::string& p) { walk(v, p, fit); }},
        {"replay", [&](const json& v, const std::string& p) { walk(v, p, replay); }},
    };

    try {
        walk(root, "", top);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config value out of range: {}", e.what()));
    }
    try {
        sim.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (path == "default") return RunConfig{};
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    const SimConfig& sim = cfg.sim;
    const WorkloadSpec& wl = sim.workload;
    json out = {
        {"cluster", {{"capacity", sim.cluster.capacity}, {"epoch_length_s", sim.cluster.epoch_length}}},
        {"policy", std::string(to_string(sim.policy))},
        {"duration_s", sim.duration},
        {"metrics_interval_s", sim.metrics_interval},
        {"use_family_hints", sim.use_family_hints},
        {"output_dir", cfg.output_dir.string()},
        {"workload",
         {{"n_jobs", wl.n_jobs},
          {"mean_interarrival_s", wl.mean_interarrival},
          {"seed", wl.seed},
          {"family_mix", {{"sublinear", wl.sublinear_fraction}, {"exponential", wl.exponential_fraction}}},
          {"loss_range", pair(wl.loss_range)},
          {"asymptote_ratio", pair(wl.asymptote_ratio)},
          {"sublinear_linear", pair(wl.sublinear_linear)},
          {"sublinear_quadratic", pair(wl.sublinear_quadratic)},
          {"exponential_mu", pair(wl.exponential_mu)},
          {"work_per_iteration", pair(wl.work_per_iteration)},
          {"max_parallelism", pair(wl.max_parallelism)},
          {"noise_sigma", pair(wl.noise_sigma)},
          {"convergence_epsilon", wl.convergence_epsilon},
          {"max_iterations", wl.max_iterations}}},
        {"fit",
         {{"decay", sim.fit.decay},
          {"min_history", sim.fit.min_history},
          {"max_refine_steps", sim.fit.max_refine_steps},
          {"refine_tolerance", sim.fit.refine_tolerance}}},
        {"replay",
         {{"max_parallelism", sim.replay.max_parallelism},
          {"convergence_epsilon", sim.replay.convergence_epsilon}}},
    };
    return out.dump(2) + "\n";
}

}  // namespace slaq
