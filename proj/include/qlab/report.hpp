#pragma once

#include "qlab/config.hpp"
#include "qlab/turnpike.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qlab {

inline constexpr const char* kArtifactVersion = "qlab 1.0.0";

/// Shortest-independent fixed format: 17 significant digits.
std::string fmt17(double v);

/// Hex rendering of a 64-bit hash.
std::string hex64(std::uint64_t h);

std::string report_csv(const TurnpikeReport& rep);
std::string rates_csv(const TurnpikeReport& rep);

/// log10 gap against log10 E[H_T] with the fitted line and a theory-slope
/// guide through the centroid of the fitted points.
std::string svg_plot(const TurnpikeReport& rep, GapComponent c);

struct ManifestEntry {
    std::string name;
    std::uint64_t hash = 0;
    std::size_t bytes = 0;
};

struct RunManifest {
    std::string command;
    Json effective_config;
    std::uint64_t seed = 0;
    double wall_clock_seconds = 0.0;
    std::vector<ManifestEntry> files;

    Json to_json() const;
};

/// Writes `content` to dir/name and records it in the manifest.
void write_output(RunManifest& manifest, const std::string& dir, const std::string& name, const std::string& content);

/// Writes dir/manifest.json.
void write_manifest(const RunManifest& manifest, const std::string& dir);

}  // namespace qlab
