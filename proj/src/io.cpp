#include "pillarmamba/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "pillarmamba/rng.hpp"

namespace pillarmamba {

using json = nlohmann::json;

namespace {

// Round to the nearest float. Kept out of line: GCC 11 at -O3 vectorizes the (x, y) pair below and drops
// the narrowing conversion.
[[gnu::noinline]] double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

// Separating-axis test on the four edge normals, demanding at least `gap` of clearance.
bool separated(const Box3D& a, const Box3D& b, double gap) {
  const auto fa = footprint(a), fb = footprint(b);
  for (const auto* poly : {&fa, &fb}) {
    for (int e = 0; e < 2; ++e) {
      const double nx = (*poly)[e + 1][1] - (*poly)[e][1], ny = (*poly)[e][0] - (*poly)[e + 1][0];
      const double len = std::hypot(nx, ny);
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : fa) {
        const double d = (p[0] * nx + p[1] * ny) / len;
        amin = std::min(amin, d), amax = std::max(amax, d);
      }
      for (const auto& p : fb) {
        const double d = (p[0] * nx + p[1] * ny) / len;
        bmin = std::min(bmin, d), bmax = std::max(bmax, d);
      }
      if (amax + gap <= bmin || bmax + gap <= amin) return true;
    }
  }
  return false;
}

Point box_point(Rng& rng, const Box3D& b, const SceneSpec& spec) {
  // Local coordinates shrunk slightly so float rounding cannot leave the box.
  const double half[3] = {b.l / 2 * (1 - 1e-4), b.w / 2 * (1 - 1e-4), b.h / 2 * (1 - 1e-4)};
  double local[3];
  for (int k = 0; k < 3; ++k) local[k] = rng.uniform(-half[k], half[k]);
  if (rng.uniform() < spec.surface_fraction) {
    // Top face or one of the four sides; the bottom faces the ground and is never hit.
    const auto face = rng.below(5);
    const double depth = std::abs(rng.normal(0.0, spec.noise_sigma));
    if (face == 4) {
      local[2] = std::max(-half[2], half[2] - depth);
    } else {
      const int axis = static_cast<int>(face / 2);
      const double sign = face % 2 == 0 ? 1.0 : -1.0;
      local[axis] = sign * std::max(0.0, half[axis] - depth);
    }
  }
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return {to_float(b.x + c * local[0] - s * local[1]), to_float(b.y + s * local[0] + c * local[1]),
          to_float(b.z + local[2]), to_float(rng.uniform(0.2, 1.0))};
}

void put_bytes(std::string& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_bytes(const std::string& in, std::size_t& pos, int n, const fs::path& path) {
  if (pos + static_cast<std::size_t>(n) > in.size())
    throw FormatError(path.string() + ": truncated at byte " + std::to_string(pos));
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += static_cast<std::size_t>(n);
  return v;
}

json box_json(const Box3D& b) {
  return {{"class", class_name(b.cls)}, {"center", {b.x, b.y, b.z}}, {"size", {b.l, b.w, b.h}}, {"yaw", b.yaw}};
}

double number_at(const json& j, const char* key, std::size_t idx, const fs::path& path) {
  if (!j.is_number()) throw FormatError(path.string() + ": [" + std::to_string(idx) + "]." + key + " is not a number");
  return j.get<double>();
}

Box3D parse_box(const json& e, std::size_t idx, const fs::path& path) {
  const std::string where = path.string() + ": [" + std::to_string(idx) + "]";
  if (!e.is_object()) throw FormatError(where + " is not an object");
  for (const char* key : {"class", "center", "size", "yaw"})
    if (!e.contains(key)) throw FormatError(where + " is missing \"" + key + "\"");
  for (const char* key : {"center", "size"})
    if (!e[key].is_array() || e[key].size() != 3) throw FormatError(where + "." + key + " must be a 3-element array");
  if (!e["class"].is_string()) throw FormatError(where + ".class must be a string");
  Box3D b;
  try {
    b.cls = class_id(e["class"].get<std::string>());
  } catch (const FormatError& err) {
    throw FormatError(where + ": " + err.what());
  }
  b.x = number_at(e["center"][0], "center", idx, path);
  b.y = number_at(e["center"][1], "center", idx, path);
  b.z = number_at(e["center"][2], "center", idx, path);
  b.l = number_at(e["size"][0], "size", idx, path);
  b.w = number_at(e["size"][1], "size", idx, path);
  b.h = number_at(e["size"][2], "size", idx, path);
  b.yaw = normalize_yaw(number_at(e["yaw"], "yaw", idx, path));
  return b;
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

void SceneSpec::validate() const {
  for (int c : counts)
    if (c < 0) throw ConfigError("scene spec: negative box count in " + describe());
  for (const auto& p : size_priors)
    for (double v : p)
      if (!(v > 0.0)) throw ConfigError("scene spec: size priors must be positive in " + describe());
  if (points_per_box <= 0 || background_points < 0 || !(noise_sigma >= 0.0) || max_retries <= 0)
    throw ConfigError("scene spec: density and retry counts must be positive in " + describe());
  grid.validate();
}

std::string SceneSpec::describe() const {
  std::ostringstream os;
  os << "SceneSpec{seed=" << seed << ", counts=[" << counts[0] << "," << counts[1] << "," << counts[2]
     << "], points_per_box=" << points_per_box << ", background_points=" << background_points
     << ", grid=[" << grid.x_min << "," << grid.x_max << ")x[" << grid.y_min << "," << grid.y_max << ")}";
  return os.str();
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scene scene;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int n = 0; n < spec.counts[static_cast<std::size_t>(cls)]; ++n) {
      const auto& prior = spec.size_priors[static_cast<std::size_t>(cls)];
      bool placed = false;
      for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
        Box3D b;
        b.cls = cls;
        b.l = prior[0] * rng.uniform(0.9, 1.1);
        b.w = prior[1] * rng.uniform(0.9, 1.1);
        b.h = prior[2] * rng.uniform(0.9, 1.1);
        const double reach = std::hypot(b.l, b.w) / 2 + spec.min_gap;
        if (spec.grid.x_max - spec.grid.x_min <= 2 * reach || spec.grid.y_max - spec.grid.y_min <= 2 * reach) break;
        b.x = rng.uniform(spec.grid.x_min + reach, spec.grid.x_max - reach);
        b.y = rng.uniform(spec.grid.y_min + reach, spec.grid.y_max - reach);
        b.z = spec.ground_z + b.h / 2;
        b.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
        placed = true;
        for (const auto& other : scene.boxes) placed = placed && separated(b, other, spec.min_gap);
        if (placed) scene.boxes.push_back(b);
      }
      if (!placed)
        throw ConfigError("generate_scene: could not place " + class_name(cls) + " box " + std::to_string(n + 1) +
                          " without overlap after " + std::to_string(spec.max_retries) + " attempts for " +
                          spec.describe());
    }
  }
  for (const auto& b : scene.boxes)
    for (int i = 0; i < spec.points_per_box; ++i) scene.cloud.push_back(box_point(rng, b, spec));
  for (int i = 0; i < spec.background_points; ++i) {
    Point p;
    do {
      p = {to_float(rng.uniform(spec.grid.x_min, spec.grid.x_max)),
           to_float(rng.uniform(spec.grid.y_min, spec.grid.y_max)),
           to_float(spec.ground_z + rng.normal(0.0, spec.noise_sigma)), to_float(rng.uniform(0.0, 0.3))};
    } while (!spec.grid.contains(p));
    scene.cloud.push_back(p);
  }
  return scene;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

void save_cloud(const fs::path& path, const PointCloud& cloud) {
  std::string bytes;
  bytes.reserve(cloud.size() * 16);
  for (const auto& p : cloud)
    for (double v : {p.x, p.y, p.z, p.r}) put_bytes(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  write_text(path, bytes);
}

PointCloud load_cloud(const fs::path& path) {
  const std::string bytes = read_text(path);
  if (bytes.size() % 16 != 0)
    throw FormatError(path.string() + ": cloud byte length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  PointCloud cloud(bytes.size() / 16);
  std::size_t pos = 0;
  auto next = [&] { return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_bytes(bytes, pos, 4, path)))); };
  for (auto& p : cloud) {
    p.x = next();
    p.y = next();
    p.z = next();
    p.r = next();
  }
  return cloud;
}

void save_labels(const fs::path& path, const std::vector<Box3D>& boxes) {
  json arr = json::array();
  for (const auto& b : boxes) arr.push_back(box_json(b));
  write_text(path, arr.dump(1) + "\n");
}

std::vector<Box3D> load_labels(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_array()) throw FormatError(path.string() + ": labels must be a JSON array");
  std::vector<Box3D> boxes;
  for (std::size_t i = 0; i < j.size(); ++i) boxes.push_back(parse_box(j[i], i, path));
  return boxes;
}

void save_detections(const fs::path& path, const std::vector<Detection>& detections) {
  json arr = json::array();
  for (const auto& d : detections) {
    json e = box_json(d.box);
    e["score"] = d.score;
    arr.push_back(e);
  }
  write_text(path, arr.dump(1) + "\n");
}

std::vector<Detection> load_detections(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_array()) throw FormatError(path.string() + ": detections must be a JSON array");
  std::vector<Detection> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Detection d{parse_box(j[i], i, path), 0.0};
    if (!j[i].contains("score")) throw FormatError(path.string() + ": [" + std::to_string(i) + "] is missing \"score\"");
    d.score = number_at(j[i]["score"], "score", i, path);
    out.push_back(d);
  }
  return out;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path base = fs::absolute(path).parent_path();
  json scenes = json::array();
  for (const auto& e : manifest.scenes)
    scenes.push_back({{"cloud", fs::absolute(e.cloud).lexically_relative(base).generic_string()},
                      {"labels", fs::absolute(e.labels).lexically_relative(base).generic_string()}});
  write_text(path, json{{"split", manifest.split}, {"scenes", scenes}}.dump(1) + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  const json j = parse_json_file(path);
  const std::string where = path.string();
  if (!j.is_object() || !j.contains("scenes") || !j["scenes"].is_array())
    throw FormatError(where + ": manifest needs a \"scenes\" array");
  for (const auto& [key, _] : j.items())
    if (key != "split" && key != "scenes") throw FormatError(where + ": unknown manifest key \"" + key + "\"");
  DatasetManifest m;
  if (j.contains("split")) {
    if (!j["split"].is_string()) throw FormatError(where + ": split must be a string");
    m.split = j["split"].get<std::string>();
  }
  const fs::path base = path.parent_path();
  for (std::size_t i = 0; i < j["scenes"].size(); ++i) {
    const auto& e = j["scenes"][i];
    ManifestEntry entry;
    for (const char* key : {"cloud", "labels"}) {
      if (!e.is_object() || !e.contains(key) || !e[key].is_string())
        throw FormatError(where + ": scenes[" + std::to_string(i) + "]." + key + " must be a string");
      const fs::path p = base / fs::path(e[key].get<std::string>());
      if (!fs::exists(p)) throw FormatError(where + ": scenes[" + std::to_string(i) + "]." + key + " " + p.string() + " does not exist");
      (std::string(key) == "cloud" ? entry.cloud : entry.labels) = p;
    }
    m.scenes.push_back(entry);
  }
  return m;
}

template <typename Scalar>
void save_weights(const fs::path& path, const ParamStore<Scalar>& store) {
  std::string bytes = "PMWT";
  put_bytes(bytes, 1, 4);
  put_bytes(bytes, store.size(), 8);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& name = store.names()[i];
    const auto& value = store[i].value;
    put_bytes(bytes, name.size(), 4);
    bytes += name;
    put_bytes(bytes, static_cast<std::uint64_t>(value.shape().rank()), 4);
    for (auto d : value.shape().dims()) put_bytes(bytes, static_cast<std::uint64_t>(d), 8);
    for (std::int64_t k = 0; k < value.size(); ++k)
      put_bytes(bytes, std::bit_cast<std::uint64_t>(static_cast<double>(value[k])), 8);
  }
  write_text(path, bytes);
}

template <typename Scalar>
void load_weights(const fs::path& path, ParamStore<Scalar>& store) {
  const std::string bytes = read_text(path);
  const std::string where = path.string();
  if (bytes.size() < 4 || bytes.compare(0, 4, "PMWT") != 0) throw FormatError(where + ": missing PMWT magic");
  std::size_t pos = 4;
  const auto version = get_bytes(bytes, pos, 4, path);
  if (version != 1) throw FormatError(where + ": unsupported weights version " + std::to_string(version));
  const auto count = get_bytes(bytes, pos, 8, path);
  if (count != store.size())
    throw FormatError(where + ": file has " + std::to_string(count) + " parameters, model has " +
                      std::to_string(store.size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get_bytes(bytes, pos, 4, path);
    if (pos + len > bytes.size()) throw FormatError(where + ": truncated parameter name");
    const std::string name = bytes.substr(pos, len);
    pos += len;
    if (!store.contains(name)) throw FormatError(where + ": unknown parameter " + name);
    auto& param = store.get(name);
    const auto rank = get_bytes(bytes, pos, 4, path);
    if (rank > 4) throw FormatError(where + ": " + name + " has rank " + std::to_string(rank));
    std::vector<std::int64_t> dims;
    for (std::uint64_t r = 0; r < rank; ++r) dims.push_back(static_cast<std::int64_t>(get_bytes(bytes, pos, 8, path)));
    const Shape shape(dims);
    if (!(shape == param.value.shape()))
      throw FormatError(where + ": " + name + " has shape " + shape.str() + ", model expects " +
                        param.value.shape().str());
    for (std::int64_t k = 0; k < param.value.size(); ++k)
      param.value[k] = static_cast<Scalar>(std::bit_cast<double>(get_bytes(bytes, pos, 8, path)));
  }
  if (pos != bytes.size()) throw FormatError(where + ": " + std::to_string(bytes.size() - pos) + " trailing bytes");
}

std::string digest_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

template void save_weights(const fs::path&, const ParamStore<float>&);
template void save_weights(const fs::path&, const ParamStore<double>&);
template void load_weights(const fs::path&, ParamStore<float>&);
template void load_weights(const fs::path&, ParamStore<double>&);

}  // namespace pillarmamba
