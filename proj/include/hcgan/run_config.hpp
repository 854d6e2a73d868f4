#pragma once

// Flat key=value run configuration shared by the CLI commands.

#include "hcgan/scenario_gan.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hcgan::cli {

struct RunConfig {
    std::string data;
    std::vector<std::string> tickers;  // empty: every column of the file
    std::string split_date;            // empty: no split
    std::int64_t test_days = 0;        // 0: whole test segment
    gan::TrainConfig train;
    bool regime_set = false;  // false: regime follows model_kind
    std::int64_t eta = 20;
    std::int64_t n_draws = 1000;
    double r_f = 0.0;
    std::string out = "run";
    std::string bundle;
    int jobs = 1;
};

/// Every accepted key, in the order effective configs are written.
const std::vector<std::string>& config_keys();

/// Sets one key; throws ValidationError for unknown keys or bad values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Parses `#` comments and key=value lines.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Resolves the regime default and validates cross-field constraints.
void finalize(RunConfig& config);

/// All keys with effective values; reading it back reproduces `config`.
std::string effective_config_text(const RunConfig& config);

}  // namespace hcgan::cli
