#include "vnav/serialization.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "vnav/error.hpp"

namespace vnav {
namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

// Rejects keys the reader does not know, so config typos fail loudly.
void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw Error(ErrorCode::InvalidSpec, "unknown key '" + key + "' in " + std::string(what));
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
Vec2 vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidSpec, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string encode_doubles(const std::vector<double>& v) {
  return base64_encode(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(double));
}

std::vector<double> decode_doubles(const std::string& text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(double) != 0) throw Error(ErrorCode::LoadFailed, "double array has a partial element");
  std::vector<double> v(bytes.size() / sizeof(double));
  std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

std::string flags_string(const std::vector<bool>& flags) {
  std::string s(flags.size(), '0');
  for (std::size_t i = 0; i < flags.size(); ++i) s[i] = flags[i] ? '1' : '0';
  return s;
}

[[noreturn]] void load_error(const std::filesystem::path& path, const std::string& where, const std::string& why) {
  throw Error(ErrorCode::LoadFailed, path.string() + (where.empty() ? "" : ":" + where) + ": " + why);
}

void check_header(const json& j, std::string_view format) {
  if (!j.is_object() || j.value("format", "") != format) {
    throw Error(ErrorCode::LoadFailed, "not a " + std::string(format) + " file");
  }
  if (j.value("version", -1) != kFileFormatVersion) {
    throw Error(ErrorCode::LoadFailed, "unsupported " + std::string(format) + " version");
  }
}

json chunk_to_json(const ChunkNode& c) {
  const std::size_t dim = c.landmarks.empty() ? 0 : c.landmarks.front().descriptor.size();
  std::vector<double> points;
  std::vector<float> descs;
  std::vector<bool> ground;
  std::vector<std::int64_t> ids;
  std::unordered_map<std::int64_t, std::size_t> by_world_id;
  for (std::size_t i = 0; i < c.landmarks.size(); ++i) {
    const auto& l = c.landmarks[i];
    points.insert(points.end(), {l.point.x(), l.point.y(), l.point.z()});
    descs.insert(descs.end(), l.descriptor.begin(), l.descriptor.end());
    ground.push_back(l.is_ground);
    ids.push_back(l.world_id);
    if (l.world_id >= 0) by_world_id.emplace(l.world_id, i);
  }

  json kfs = json::array();
  for (const auto& kf : c.keyframes) {
    const auto& dets = kf.observation.detections;
    std::vector<double> pixels, depths;
    std::vector<bool> flags;
    std::vector<std::int64_t> det_ids, refs;
    std::vector<float> own;
    for (const auto& d : dets) {
      pixels.insert(pixels.end(), {d.pixel.u, d.pixel.v});
      depths.push_back(d.depth);
      flags.push_back(d.is_ground);
      det_ids.push_back(d.landmark_id);
      std::int64_t ref = -1;
      if (auto it = by_world_id.find(d.landmark_id); it != by_world_id.end() &&
                                                     c.landmarks[it->second].descriptor == d.descriptor) {
        ref = static_cast<std::int64_t>(it->second);
      } else {
        own.insert(own.end(), d.descriptor.begin(), d.descriptor.end());
      }
      refs.push_back(ref);
    }
    kfs.push_back({{"frame", kf.frame_id},
                   {"pose", kf.pose_in_chunk},
                   {"world_position_gt", vec2_json(kf.world_position_gt)},
                   {"world_yaw_gt", kf.world_yaw_gt},
                   {"detections",
                    {{"count", dets.size()},
                     {"pixels", encode_doubles(pixels)},
                     {"depths", encode_doubles(depths)},
                     {"ground", flags_string(flags)},
                     {"landmark_ids", det_ids},
                     {"descriptor_refs", refs},
                     {"descriptors", encode_floats(own)}}}});
  }
  json j = {{"chunk_id", c.chunk_id},
            {"trajectory_id", c.trajectory_id},
            {"true_scale_gt", c.true_scale_gt},
            {"estimated_scale", c.estimated_scale ? json(*c.estimated_scale) : json(nullptr)},
            {"landmarks",
             {{"count", c.landmarks.size()},
              {"dim", dim},
              {"points", encode_doubles(points)},
              {"descriptors", encode_floats(descs)},
              {"ground", flags_string(ground)},
              {"world_ids", ids}}},
            {"keyframes", std::move(kfs)}};
  return j;
}

std::vector<bool> parse_flags(const std::string& s, std::size_t n) {
  if (s.size() != n) throw Error(ErrorCode::LoadFailed, "flag string length mismatch");
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (s[i] != '0' && s[i] != '1') throw Error(ErrorCode::LoadFailed, "bad flag character");
    out[i] = s[i] == '1';
  }
  return out;
}

ChunkNode chunk_from_json(const json& j) {
  ChunkNode c;
  c.chunk_id = j.at("chunk_id").get<std::uint32_t>();
  c.trajectory_id = j.at("trajectory_id").get<std::uint32_t>();
  c.true_scale_gt = j.at("true_scale_gt").get<double>();
  if (!j.at("estimated_scale").is_null()) c.estimated_scale = j.at("estimated_scale").get<double>();

  const auto& lj = j.at("landmarks");
  const std::size_t n = lj.at("count").get<std::size_t>();
  const std::size_t dim = lj.at("dim").get<std::size_t>();
  const auto points = decode_doubles(lj.at("points").get<std::string>());
  const auto descs = decode_floats(lj.at("descriptors").get<std::string>());
  const auto ground = parse_flags(lj.at("ground").get<std::string>(), n);
  const auto ids = lj.at("world_ids").get<std::vector<std::int64_t>>();
  if (points.size() != 3 * n || descs.size() != dim * n || ids.size() != n) {
    throw Error(ErrorCode::LoadFailed, "chunk " + std::to_string(c.chunk_id) + " landmark arrays disagree");
  }
  for (std::size_t i = 0; i < n; ++i) {
    c.landmarks.push_back({Vec3(points[3 * i], points[3 * i + 1], points[3 * i + 2]),
                           Descriptor(descs.begin() + i * dim, descs.begin() + (i + 1) * dim), ground[i], ids[i]});
  }

  for (const auto& kj : j.at("keyframes")) {
    Keyframe kf;
    kf.frame_id = kj.at("frame").get<FrameId>();
    kf.pose_in_chunk = kj.at("pose").get<Pose>();
    kf.world_position_gt = vec2_from(kj.at("world_position_gt"));
    kf.world_yaw_gt = kj.at("world_yaw_gt").get<double>();
    const auto& dj = kj.at("detections");
    const std::size_t m = dj.at("count").get<std::size_t>();
    const auto pixels = decode_doubles(dj.at("pixels").get<std::string>());
    const auto depths = decode_doubles(dj.at("depths").get<std::string>());
    const auto flags = parse_flags(dj.at("ground").get<std::string>(), m);
    const auto det_ids = dj.at("landmark_ids").get<std::vector<std::int64_t>>();
    const auto refs = dj.at("descriptor_refs").get<std::vector<std::int64_t>>();
    const auto own = decode_floats(dj.at("descriptors").get<std::string>());
    if (pixels.size() != 2 * m || depths.size() != m || det_ids.size() != m || refs.size() != m) {
      throw Error(ErrorCode::LoadFailed, "keyframe " + kf.frame_id.str() + " detection arrays disagree");
    }
    std::size_t own_pos = 0;
    for (std::size_t i = 0; i < m; ++i) {
      Detection d;
      d.pixel = {pixels[2 * i], pixels[2 * i + 1]};
      d.depth = depths[i];
      d.is_ground = flags[i];
      d.landmark_id = det_ids[i];
      if (refs[i] >= 0) {
        if (static_cast<std::size_t>(refs[i]) >= n) throw Error(ErrorCode::LoadFailed, "descriptor reference out of range");
        d.descriptor = c.landmarks[refs[i]].descriptor;
      } else {
        if (own_pos + dim > own.size()) throw Error(ErrorCode::LoadFailed, "keyframe descriptors truncated");
        d.descriptor.assign(own.begin() + own_pos, own.begin() + own_pos + dim);
        own_pos += dim;
      }
      kf.observation.detections.push_back(std::move(d));
    }
    if (own_pos != own.size()) throw Error(ErrorCode::LoadFailed, "keyframe has surplus descriptors");
    c.keyframes.push_back(std::move(kf));
  }
  return c;
}

}  // namespace

void to_json(json& j, const Pose& p) {
  const auto& q = p.rotation;
  j = json::array({p.translation.x(), p.translation.y(), p.translation.z(), q.x(), q.y(), q.z(), q.w()});
}

void from_json(const json& j, Pose& p) {
  if (!j.is_array() || j.size() != 7) throw Error(ErrorCode::InvalidSpec, "pose must be [x, y, z, qx, qy, qz, qw]");
  p.translation = Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  p.rotation = Eigen::Quaterniond(j[6].get<double>(), j[3].get<double>(), j[4].get<double>(), j[5].get<double>());
}

void to_json(json& j, const CameraModel& c) {
  j = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

void from_json(const json& j, CameraModel& c) {
  check_keys(j, {"fx", "fy", "cx", "cy", "width", "height"}, "camera");
  read_opt(j, "fx", c.fx);
  read_opt(j, "fy", c.fy);
  read_opt(j, "cx", c.cx);
  read_opt(j, "cy", c.cy);
  read_opt(j, "width", c.width);
  read_opt(j, "height", c.height);
}

void to_json(json& j, const Rig& r) { j = {{"camera", r.camera}, {"mount", r.mount}}; }

void from_json(const json& j, Rig& r) {
  check_keys(j, {"camera", "mount"}, "rig");
  read_opt(j, "camera", r.camera);
  read_opt(j, "mount", r.mount);
}

void to_json(json& j, const ActuationNoise& n) {
  j = {{"distance_sigma", n.distance_sigma},
       {"heading_sigma", n.heading_sigma},
       {"turn_sigma", n.turn_sigma},
       {"step_multiplier", n.step_multiplier}};
}

void from_json(const json& j, ActuationNoise& n) {
  check_keys(j, {"distance_sigma", "heading_sigma", "turn_sigma", "step_multiplier"}, "actuation noise");
  read_opt(j, "distance_sigma", n.distance_sigma);
  read_opt(j, "heading_sigma", n.heading_sigma);
  read_opt(j, "turn_sigma", n.turn_sigma);
  read_opt(j, "step_multiplier", n.step_multiplier);
}

void to_json(json& j, const NoiseConfig& n) {
  j = {{"pixel_sigma", n.pixel_sigma},
       {"descriptor_sigma", n.descriptor_sigma},
       {"outlier_rate", n.outlier_rate},
       {"dropout_rate", n.dropout_rate},
       {"ground_mislabel_rate", n.ground_mislabel_rate},
       {"actuation", n.actuation}};
}

void from_json(const json& j, NoiseConfig& n) {
  check_keys(j, {"pixel_sigma", "descriptor_sigma", "outlier_rate", "dropout_rate", "ground_mislabel_rate", "actuation"},
             "noise");
  read_opt(j, "pixel_sigma", n.pixel_sigma);
  read_opt(j, "descriptor_sigma", n.descriptor_sigma);
  read_opt(j, "outlier_rate", n.outlier_rate);
  read_opt(j, "dropout_rate", n.dropout_rate);
  read_opt(j, "ground_mislabel_rate", n.ground_mislabel_rate);
  read_opt(j, "actuation", n.actuation);
}

void to_json(json& j, const Corridor& c) {
  json pts = json::array();
  for (const auto& w : c.waypoints) pts.push_back(vec2_json(w));
  j = {{"waypoints", pts}, {"width", c.width}, {"spin_at_junctions", c.spin_at_junctions}};
}

void from_json(const json& j, Corridor& c) {
  check_keys(j, {"waypoints", "width", "spin_at_junctions"}, "corridor");
  c.waypoints.clear();
  for (const auto& w : j.at("waypoints")) c.waypoints.push_back(vec2_from(w));
  read_opt(j, "width", c.width);
  read_opt(j, "spin_at_junctions", c.spin_at_junctions);
}

void to_json(json& j, const WorldSpec& s) {
  j = {{"extent_min", vec2_json(s.extent_min)},
       {"extent_max", vec2_json(s.extent_max)},
       {"landmark_density", s.landmark_density},
       {"ground_per_m2", s.ground_per_m2},
       {"structure_per_m2", s.structure_per_m2},
       {"structure_band_near", s.structure_band_near},
       {"structure_band_far", s.structure_band_far},
       {"structure_z_min", s.structure_z_min},
       {"structure_z_max", s.structure_z_max},
       {"max_range", s.max_range},
       {"ground_range", s.ground_range},
       {"descriptor_dim", s.descriptor_dim},
       {"corridors", s.corridors}};
}

void from_json(const json& j, WorldSpec& s) {
  check_keys(j,
             {"extent_min", "extent_max", "landmark_density", "ground_per_m2", "structure_per_m2",
              "structure_band_near", "structure_band_far", "structure_z_min", "structure_z_max", "max_range",
              "ground_range", "descriptor_dim", "corridors"},
             "world spec");
  if (j.contains("extent_min")) s.extent_min = vec2_from(j["extent_min"]);
  if (j.contains("extent_max")) s.extent_max = vec2_from(j["extent_max"]);
  read_opt(j, "landmark_density", s.landmark_density);
  read_opt(j, "ground_per_m2", s.ground_per_m2);
  read_opt(j, "structure_per_m2", s.structure_per_m2);
  read_opt(j, "structure_band_near", s.structure_band_near);
  read_opt(j, "structure_band_far", s.structure_band_far);
  read_opt(j, "structure_z_min", s.structure_z_min);
  read_opt(j, "structure_z_max", s.structure_z_max);
  read_opt(j, "max_range", s.max_range);
  read_opt(j, "ground_range", s.ground_range);
  read_opt(j, "descriptor_dim", s.descriptor_dim);
  read_opt(j, "corridors", s.corridors);
}

void to_json(json& j, const FrameId& f) { j = f.str(); }
void from_json(const json& j, FrameId& f) { f = FrameId::parse(j.get<std::string>()); }

void to_json(json& j, const Action& a) { j = std::string(to_string(a)); }
void from_json(const json& j, Action& a) { a = parse_action(j.get<std::string>()); }

void to_json(json& j, const PlanarPose& p) { j = json::array({p.x, p.y, p.yaw}); }
void from_json(const json& j, PlanarPose& p) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::InvalidSpec, "planar pose must be [x, y, yaw]");
  p = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(json& j, const RunMetrics& m) {
  j = {{"success", m.success},
       {"goal_declared", m.goal_declared},
       {"final_distance_to_goal", m.final_distance_to_goal},
       {"sr_1_5", m.sr_hit[0]},
       {"sr_3", m.sr_hit[1]},
       {"sr_7", m.sr_hit[2]},
       {"sr_12", m.sr_hit[3]},
       {"frechet_m", m.frechet_m},
       {"rot_err_mean_deg", m.rot_err_mean_deg},
       {"rot_err_std_deg", m.rot_err_std_deg},
       {"trans_err_mean_m", m.trans_err_mean_m},
       {"trans_err_std_m", m.trans_err_std_m},
       {"interventions", m.interventions},
       {"intervention_actions", m.intervention_actions},
       {"robot_actions", m.robot_actions},
       {"elapsed_s", m.elapsed_s}};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw Error(ErrorCode::LoadFailed, "digest must be 16 hex digits");
  std::uint64_t v = 0;
  for (char ch : s) {
    int d;
    if (ch >= '0' && ch <= '9') d = ch - '0';
    else if (ch >= 'a' && ch <= 'f') d = ch - 'a' + 10;
    else throw Error(ErrorCode::LoadFailed, "digest has a non-hex character");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < size ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < size ? data[i + 2] : 0;
    const std::uint32_t w = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kAlphabet[(w >> 18) & 63]);
    out.push_back(kAlphabet[(w >> 12) & 63]);
    out.push_back(i + 1 < size ? kAlphabet[(w >> 6) & 63] : '=');
    out.push_back(i + 2 < size ? kAlphabet[w & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  static const auto table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kAlphabet[i])] = i;
    return t;
  }();
  if (text.size() % 4 != 0) throw Error(ErrorCode::LoadFailed, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = table[static_cast<unsigned char>(ch)];
        if (v[k] < 0 || pad > 0) throw Error(ErrorCode::LoadFailed, "invalid base64 character");
      }
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(w >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w));
  }
  return out;
}

std::string encode_floats(const std::vector<float>& v) {
  return base64_encode(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(float));
}

std::vector<float> decode_floats(const std::string& text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(float) != 0) throw Error(ErrorCode::LoadFailed, "float array has a partial element");
  std::vector<float> v(bytes.size() / sizeof(float));
  std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) load_error(path, "", "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    load_error(path, "byte " + std::to_string(e.byte), e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::LoadFailed, path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw Error(ErrorCode::LoadFailed, path.string() + ": write failed");
}

void save_world(const std::filesystem::path& path, const World& world) {
  const json j = {{"format", "vnav-world"},
                  {"version", kFileFormatVersion},
                  {"seed", world.seed()},
                  {"spec", world.spec()},
                  {"landmark_count", world.landmarks().size()},
                  {"digest", hex64(world.digest())}};
  write_text_file(path, j.dump(2) + "\n");
}

World load_world(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    check_header(j, "vnav-world");
    World world = generate_world(j.at("seed").get<std::uint64_t>(), j.at("spec").get<WorldSpec>());
    if (world.landmarks().size() != j.at("landmark_count").get<std::size_t>()) {
      load_error(path, "landmark_count", "regenerated world has a different landmark count");
    }
    if (hex64(world.digest()) != j.at("digest").get<std::string>()) {
      load_error(path, "digest", "regenerated world does not match the stored digest");
    }
    return world;
  } catch (const json::exception& e) {
    load_error(path, "", e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::LoadFailed && std::string_view(e.what()).find(path.string()) != std::string_view::npos) throw;
    load_error(path, "", e.detail());
  }
}

void save_log(const std::filesystem::path& path, const ExplorationLog& log, const World& world) {
  std::ostringstream out;
  const json header = {{"format", "vnav-log"},
                       {"version", kFileFormatVersion},
                       {"trajectory_id", log.trajectory_id},
                       {"rig", log.rig},
                       {"observation_noise", log.observation_noise},
                       {"observation_seed", log.observation_seed},
                       {"world_digest", hex64(world.digest())},
                       {"entries", log.entries.size()}};
  out << header.dump() << "\n";
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    const auto& e = log.entries[i];
    const json rec = {{"i", i},
                      {"t", e.timestamp},
                      {"action", e.action ? json(*e.action) : json(nullptr)},
                      {"pose", e.pose},
                      {"obs", {{"count", e.observation.size()}, {"digest", hex64(digest(e.observation))}}}};
    out << rec.dump() << "\n";
  }
  write_text_file(path, out.str());
}

ExplorationLog load_log(const std::filesystem::path& path, const World& world) {
  std::ifstream in(path);
  if (!in) load_error(path, "", "cannot open file");
  ExplorationLog log;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (line_no == 1) {
        check_header(j, "vnav-log");
        log.trajectory_id = j.at("trajectory_id").get<std::uint32_t>();
        log.rig = j.at("rig").get<Rig>();
        log.observation_noise = j.at("observation_noise").get<NoiseConfig>();
        log.observation_seed = j.at("observation_seed").get<std::uint64_t>();
        expected = j.at("entries").get<std::size_t>();
        if (j.at("world_digest").get<std::string>() != hex64(world.digest())) {
          load_error(path, "1", "log was recorded in a different world");
        }
        continue;
      }
      const std::size_t idx = log.entries.size();
      if (j.at("i").get<std::size_t>() != idx) load_error(path, std::to_string(line_no), "entry index out of order");
      LogEntry e;
      e.timestamp = j.at("t").get<double>();
      if (!j.at("action").is_null()) e.action = j.at("action").get<Action>();
      e.pose = j.at("pose").get<Pose>();
      if (idx > 0 && !(e.timestamp > log.entries.back().timestamp)) {
        load_error(path, std::to_string(line_no), "timestamps must increase");
      }
      AgentState st{e.pose, e.timestamp};
      e.observation = observe(world, st, log.rig, log.observation_noise, observation_seed_for(log.observation_seed, idx));
      const auto& oj = j.at("obs");
      if (e.observation.size() != oj.at("count").get<std::size_t>() ||
          digest(e.observation) != parse_hex64(oj.at("digest").get<std::string>())) {
        load_error(path, std::to_string(line_no), "re-rendered observation does not match the logged digest");
      }
      log.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    load_error(path, std::to_string(line_no), e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::LoadFailed) throw;
    load_error(path, std::to_string(line_no), e.detail());
  }
  if (line_no == 0) load_error(path, "", "empty file");
  if (log.entries.size() != expected) load_error(path, "", "header promises " + std::to_string(expected) + " entries");
  return log;
}

json graph_to_json(const SceneGraph& graph) {
  json chunks = json::array();
  for (const auto& c : graph.chunks()) chunks.push_back(chunk_to_json(c));
  json edges = json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back({{"from", e.from},
                     {"to", e.to},
                     {"kind", e.kind == EdgeKind::Sequential ? "sequential" : "cross"},
                     {"weight", e.weight},
                     {"correspondences", e.correspondence_count}});
  }
  std::vector<float> descs;
  json frames = json::array();
  std::size_t dim = graph.index().dim();
  for (const auto& entry : graph.index().entries()) {
    frames.push_back(entry.frame);
    descs.insert(descs.end(), entry.descriptor.values.begin(), entry.descriptor.values.end());
  }
  return {{"format", "vnav-graph"},
          {"version", kFileFormatVersion},
          {"chunks", std::move(chunks)},
          {"edges", std::move(edges)},
          {"index", {{"dim", dim}, {"frames", std::move(frames)}, {"descriptors", encode_floats(descs)}}}};
}

SceneGraph graph_from_json(const json& j) {
  check_header(j, "vnav-graph");
  SceneGraph graph;
  std::vector<ChunkNode> chunks;
  for (const auto& cj : j.at("chunks")) chunks.push_back(chunk_from_json(cj));
  graph.add_chunks(std::move(chunks));
  for (const auto& ej : j.at("edges")) {
    FrameEdge e;
    e.from = ej.at("from").get<FrameId>();
    e.to = ej.at("to").get<FrameId>();
    const auto kind = ej.at("kind").get<std::string>();
    if (kind != "sequential" && kind != "cross") throw Error(ErrorCode::LoadFailed, "unknown edge kind " + kind);
    e.kind = kind == "sequential" ? EdgeKind::Sequential : EdgeKind::Cross;
    e.weight = ej.at("weight").get<double>();
    e.correspondence_count = ej.at("correspondences").get<std::size_t>();
    graph.add_edge(e);
  }
  const auto& ij = j.at("index");
  const std::size_t dim = ij.at("dim").get<std::size_t>();
  const auto frames = ij.at("frames").get<std::vector<FrameId>>();
  const auto descs = decode_floats(ij.at("descriptors").get<std::string>());
  if (descs.size() != dim * frames.size()) throw Error(ErrorCode::LoadFailed, "index descriptor block has the wrong size");
  std::vector<DescriptorIndex::Entry> entries;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    entries.push_back({frames[i], GlobalDescriptor{std::vector<float>(descs.begin() + i * dim, descs.begin() + (i + 1) * dim)}});
  }
  graph.set_index(DescriptorIndex(std::move(entries)));
  return graph;
}

void save_graph(const std::filesystem::path& path, const SceneGraph& graph) {
  write_text_file(path, graph_to_json(graph).dump() + "\n");
}

SceneGraph load_graph(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return graph_from_json(j);
  } catch (const json::exception& e) {
    load_error(path, "", e.what());
  } catch (const Error& e) {
    load_error(path, "", e.detail());
  }
}

}  // namespace vnav
