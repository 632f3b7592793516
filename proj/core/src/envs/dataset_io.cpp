#include "slotlab/envs/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "slotlab/binary_io.hpp"
#include "slotlab/error.hpp"

namespace slotlab::envs {
namespace {

using nlohmann::json;
constexpr char kMagic[4] = {'S', 'L', 'D', 'S'};

struct Header {
  std::uint32_t version = 0;
  EnvKind kind = EnvKind::kShapes;
  std::uint32_t objects = 0, channels = 0, height = 0, width = 0, episodes = 0, steps = 0;
  json meta;
};

Header ReadHeader(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) Fail(ErrorCategory::kFormat, "not a dataset file (bad magic)");
  Header h;
  h.version = io::ReadU32(in);
  if (h.version != kDatasetVersion) Fail(ErrorCategory::kFormat, "unsupported dataset version " + std::to_string(h.version));
  const std::uint8_t env_id = io::ReadU8(in);
  if (env_id > 2) Fail(ErrorCategory::kFormat, "unknown environment id " + std::to_string(env_id));
  h.kind = static_cast<EnvKind>(env_id);
  h.objects = io::ReadU32(in);
  h.channels = io::ReadU32(in);
  h.height = io::ReadU32(in);
  h.width = io::ReadU32(in);
  h.episodes = io::ReadU32(in);
  h.steps = io::ReadU32(in);
  try {
    h.meta = json::parse(io::ReadString(in));
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("dataset header is not valid JSON: ") + e.what());
  }
  return h;
}

json ManifestFromHeader(const Header& h) {
  json m;
  m["format"] = "SLDS";
  m["version"] = h.version;
  m["environment"] = std::string(EnvName(h.kind));
  m["objects"] = h.objects;
  m["channels"] = h.channels;
  m["height"] = h.height;
  m["width"] = h.width;
  m["episodes"] = h.episodes;
  m["steps"] = h.steps;
  m["transitions"] = static_cast<std::uint64_t>(h.episodes) * h.steps;
  m["header"] = h.meta;
  return m;
}

void WriteGridState(std::ostream& out, const GridState& s) {
  for (std::size_t k = 0; k < s.num_objects(); ++k) {
    io::WriteI32(out, s.positions[k].row);
    io::WriteI32(out, s.positions[k].col);
    io::WriteI32(out, s.attributes[k].shape);
    io::WriteI32(out, s.attributes[k].color);
  }
}

GridState ReadGridState(std::istream& in, std::size_t objects, int grid_size) {
  GridState s;
  s.grid_size = grid_size;
  for (std::size_t k = 0; k < objects; ++k) {
    Cell c;
    c.row = io::ReadI32(in);
    c.col = io::ReadI32(in);
    AttributePair a;
    a.shape = io::ReadI32(in);
    a.color = io::ReadI32(in);
    s.positions.push_back(c);
    s.attributes.push_back(a);
  }
  return s;
}

void WriteBodyState(std::ostream& out, const BodyState& s) {
  for (const Body& b : s.bodies) {
    for (double v : {b.position[0], b.position[1], b.velocity[0], b.velocity[1], b.mass}) io::WriteF64(out, v);
  }
}

BodyState ReadBodyState(std::istream& in, std::size_t objects) {
  BodyState s;
  for (std::size_t k = 0; k < objects; ++k) {
    Body b;
    b.position[0] = io::ReadF64(in);
    b.position[1] = io::ReadF64(in);
    b.velocity[0] = io::ReadF64(in);
    b.velocity[1] = io::ReadF64(in);
    b.mass = io::ReadF64(in);
    s.bodies.push_back(b);
  }
  return s;
}

}  // namespace

json CatalogToJson(const AttributeCatalog& catalog) {
  json colors = json::array();
  for (std::size_t i = 0; i < catalog.colors.size(); ++i) {
    const Rgb& c = catalog.colors[i];
    colors.push_back({{"name", catalog.color_names[i]}, {"rgb", {c.r, c.g, c.b}}});
  }
  return {{"shapes", catalog.shapes}, {"colors", colors}};
}

AttributeCatalog CatalogFromJson(const json& j) {
  try {
    AttributeCatalog catalog;
    catalog.shapes = j.at("shapes").get<std::vector<std::string>>();
    for (const auto& c : j.at("colors")) {
      catalog.color_names.push_back(c.at("name").get<std::string>());
      const auto rgb = c.at("rgb").get<std::vector<double>>();
      if (rgb.size() != 3) Fail(ErrorCategory::kFormat, "color must have three channels");
      catalog.colors.push_back({rgb[0], rgb[1], rgb[2]});
    }
    return catalog;
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("malformed catalog: ") + e.what());
  }
}

json EnvToJson(const EnvSpec& env) {
  return {{"kind", std::string(EnvName(env.kind))},
          {"grid_size", env.grid_size},
          {"catalog", CatalogToJson(env.catalog)},
          {"gravity", {{"g", env.gravity.gravitational_constant}, {"softening", env.gravity.softening}}},
          {"dt", env.dt},
          {"view", {{"half_extent", env.view.half_extent}, {"image_size", env.view.image_size},
                    {"disc_radius", env.view.disc_radius}}}};
}

EnvSpec EnvFromJson(const json& j) {
  try {
    EnvSpec env;
    env.kind = ParseEnvKind(j.at("kind").get<std::string>());
    env.grid_size = j.at("grid_size").get<int>();
    env.catalog = CatalogFromJson(j.at("catalog"));
    env.gravity.gravitational_constant = j.at("gravity").at("g").get<double>();
    env.gravity.softening = j.at("gravity").at("softening").get<double>();
    env.dt = j.at("dt").get<double>();
    env.view.half_extent = j.at("view").at("half_extent").get<double>();
    env.view.image_size = j.at("view").at("image_size").get<int>();
    env.view.disc_radius = j.at("view").at("disc_radius").get<double>();
    return env;
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("malformed environment block: ") + e.what());
  }
}

json AssignmentToJson(const Assignment& assignment) {
  json a = json::array();
  for (const AttributePair& p : assignment) a.push_back({p.shape, p.color});
  return a;
}

Assignment AssignmentFromJson(const json& j) {
  Assignment a;
  try {
    for (const auto& p : j) a.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("malformed assignment: ") + e.what());
  }
  return a;
}

std::string SerializeDataset(const ExperienceBuffer& buffer) {
  const EnvSpec& env = buffer.env;
  const std::size_t side = env.image_size(), channels = env.channels(), objects = buffer.num_objects();
  json meta;
  meta["env"] = EnvToJson(env);
  meta["assignment"] = AssignmentToJson(buffer.assignment);
  meta["provenance"] = buffer.descriptor.empty() ? json::object() : json::parse(buffer.descriptor);

  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  io::WriteU32(out, kDatasetVersion);
  io::WriteU8(out, static_cast<std::uint8_t>(env.kind));
  io::WriteU32(out, static_cast<std::uint32_t>(objects));
  io::WriteU32(out, static_cast<std::uint32_t>(channels));
  io::WriteU32(out, static_cast<std::uint32_t>(side));
  io::WriteU32(out, static_cast<std::uint32_t>(side));
  io::WriteU32(out, static_cast<std::uint32_t>(buffer.episodes.size()));
  io::WriteU32(out, static_cast<std::uint32_t>(buffer.steps));
  io::WriteString(out, meta.dump());
  for (const Episode& ep : buffer.episodes) {
    if (ep.steps() != buffer.steps || ep.observations.size() != buffer.steps + 1) {
      Fail(ErrorCategory::kContract, "episode length differs from buffer step count");
    }
    for (const Image& img : ep.observations) {
      if (img.height != side || img.width != side || img.channels != channels) {
        Fail(ErrorCategory::kContract, "observation shape differs from header");
      }
      io::WriteBytes(out, img.pixels);
    }
    for (const auto& a : ep.actions) {
      io::WriteU8(out, a ? static_cast<std::uint8_t>(a->object) : 255);
      io::WriteU8(out, a ? static_cast<std::uint8_t>(a->direction) : 255);
    }
    if (env.kind == EnvKind::kThreeBody) {
      WriteBodyState(out, ep.previous_body_state);
      for (const BodyState& s : ep.body_states) WriteBodyState(out, s);
    } else {
      for (const GridState& s : ep.grid_states) WriteGridState(out, s);
    }
  }
  return out.str();
}

ExperienceBuffer ParseDataset(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  const Header h = ReadHeader(in);
  ExperienceBuffer buffer;
  try {
    buffer.env = EnvFromJson(h.meta.at("env"));
    buffer.assignment = AssignmentFromJson(h.meta.at("assignment"));
    buffer.descriptor = h.meta.at("provenance").dump();
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, std::string("dataset header incomplete: ") + e.what());
  }
  if (buffer.env.kind != h.kind || buffer.assignment.size() != h.objects || buffer.env.channels() != h.channels ||
      buffer.env.image_size() != h.height || h.height != h.width) {
    Fail(ErrorCategory::kFormat, "dataset header fields disagree with environment block");
  }
  buffer.steps = h.steps;
  const std::size_t frame_bytes = static_cast<std::size_t>(h.height) * h.width * h.channels;
  if (static_cast<std::uint64_t>(h.episodes) * (h.steps + 1) * frame_bytes > bytes.size()) {
    Fail(ErrorCategory::kFormat, "dataset shorter than its header claims");
  }
  buffer.episodes.resize(h.episodes);
  for (Episode& ep : buffer.episodes) {
    for (std::size_t t = 0; t <= h.steps; ++t) {
      Image img(h.height, h.width, h.channels);
      io::ReadBytes(in, img.pixels);
      ep.observations.push_back(std::move(img));
    }
    for (std::size_t t = 0; t < h.steps; ++t) {
      const std::uint8_t object = io::ReadU8(in), direction = io::ReadU8(in);
      if (object == 255 && direction == 255) {
        ep.actions.push_back(std::nullopt);
      } else {
        if (object >= h.objects || direction >= kNumDirections) Fail(ErrorCategory::kFormat, "invalid action record");
        ep.actions.push_back(GridAction{object, static_cast<Direction>(direction)});
      }
    }
    if (h.kind == EnvKind::kThreeBody) {
      ep.previous_body_state = ReadBodyState(in, h.objects);
      for (std::size_t t = 0; t <= h.steps; ++t) ep.body_states.push_back(ReadBodyState(in, h.objects));
    } else {
      for (std::size_t t = 0; t <= h.steps; ++t) ep.grid_states.push_back(ReadGridState(in, h.objects, buffer.env.grid_size));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) Fail(ErrorCategory::kFormat, "trailing bytes after dataset");
  return buffer;
}

void WriteDataset(const std::string& path, const ExperienceBuffer& buffer) {
  io::AtomicWriteFile(path, SerializeDataset(buffer));
}

ExperienceBuffer ReadDataset(const std::string& path) { return ParseDataset(io::ReadFile(path)); }

json DatasetManifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCategory::kIo, "cannot open " + path);
  return ManifestFromHeader(ReadHeader(in));
}

json DatasetManifest(const ExperienceBuffer& buffer) {
  const std::string bytes = SerializeDataset(buffer);
  std::istringstream in(bytes, std::ios::binary);
  return ManifestFromHeader(ReadHeader(in));
}

}  // namespace slotlab::envs
