#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vnav/metrics.hpp"
#include "vnav/scene_graph.hpp"
#include "vnav/sim_world.hpp"

namespace vnav {

using json = nlohmann::json;

inline constexpr int kFileFormatVersion = 1;

// JSON mappings shared by the files, the run log, the wire protocol and the
// CLI config. Poses are [x, y, z, qx, qy, qz, qw].
void to_json(json& j, const Pose& p);
void from_json(const json& j, Pose& p);
void to_json(json& j, const CameraModel& c);
void from_json(const json& j, CameraModel& c);
void to_json(json& j, const Rig& r);
void from_json(const json& j, Rig& r);
void to_json(json& j, const ActuationNoise& n);
void from_json(const json& j, ActuationNoise& n);
void to_json(json& j, const NoiseConfig& n);
void from_json(const json& j, NoiseConfig& n);
void to_json(json& j, const Corridor& c);
void from_json(const json& j, Corridor& c);
void to_json(json& j, const WorldSpec& s);
void from_json(const json& j, WorldSpec& s);
void to_json(json& j, const FrameId& f);
void from_json(const json& j, FrameId& f);
void to_json(json& j, const Action& a);
void from_json(const json& j, Action& a);
void to_json(json& j, const PlanarPose& p);
void from_json(const json& j, PlanarPose& p);
void to_json(json& j, const RunMetrics& m);

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

std::string base64_encode(const std::uint8_t* data, std::size_t size);
std::vector<std::uint8_t> base64_decode(const std::string& text);
std::string encode_floats(const std::vector<float>& v);
std::vector<float> decode_floats(const std::string& text);

/// World files hold the seed and spec; loading regenerates the landmarks and
/// checks them against the stored digest.
void save_world(const std::filesystem::path& path, const World& world);
World load_world(const std::filesystem::path& path);

/// Exploration logs are JSON lines: a header, then one record per entry with
/// the observation digest. Loading re-renders every observation from the
/// world and rejects any digest mismatch.
void save_log(const std::filesystem::path& path, const ExplorationLog& log, const World& world);
ExplorationLog load_log(const std::filesystem::path& path, const World& world);

/// Graph files carry chunks, landmarks, edges and the descriptor index.
/// Descriptors are stored as base64 float32; a keyframe detection whose
/// descriptor equals its chunk landmark's is stored as a reference.
void save_graph(const std::filesystem::path& path, const SceneGraph& graph);
SceneGraph load_graph(const std::filesystem::path& path);

json graph_to_json(const SceneGraph& graph);
SceneGraph graph_from_json(const json& j);

/// Reads a whole JSON document; LoadFailed names the file and the reason.
json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vnav
