#pragma once

#include <slaq/simulator.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace slaq {

/// Everything a `simulate` or `replay` run needs.
///
/// Configuration files are JSON objects; every key is optional and defaults
/// to the values below. Unknown keys are rejected. See README.md for the
/// full key list.
struct RunConfig {
    SimConfig sim;
    std::filesystem::path output_dir = "slaq-out";
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses JSON text. Throws ConfigError on syntax errors, wrong types,
/// unknown keys or values that fail validation.
RunConfig parse_run_config(std::string_view json_text);

/// Reads a JSON file; the literal path "default" yields the built-in defaults.
RunConfig load_run_config(const std::filesystem::path& path);

/// Serializes every key, so the output documents the schema and round-trips.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace slaq
