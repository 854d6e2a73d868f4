#pragma once

// Binary persistence of networks and model bundles. Layout (little-endian)
// is described in docs/formats.md; writing the same bundle twice produces
// identical bytes.

#include "hcgan/networks.hpp"
#include "hcgan/scenario_gan.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace hcgan::archive {

inline constexpr std::uint32_t kFormatVersion = 1;

void write_network(std::ostream& out, const nn::MlpNetwork& net, std::uint64_t seed);
/// Reads one network record; `seed` receives the recorded seed when non-null.
nn::MlpNetwork read_network(std::istream& in, std::uint64_t* seed = nullptr);

/// key=value lines, one per TrainConfig field, with doubles printed to round-trip exactly.
std::string config_to_text(const gan::TrainConfig& config);
gan::TrainConfig config_from_text(const std::string& text);

void write_bundle(std::ostream& out, const gan::ModelBundle& bundle);
gan::ModelBundle read_bundle(std::istream& in);

void save_bundle(const gan::ModelBundle& bundle, const std::filesystem::path& path);
gan::ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace hcgan::archive
