#include "fcnet/synthdata.hpp"

#include "fcnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace fcnet {
namespace {

// Streams of the per-scene generator.
constexpr std::uint64_t kGeometryStream = 0;
constexpr std::uint64_t kRenderStream = 1;

// Minimum horizontal gap between pedestrians; occluder margins stay below it
// so one object's occluder never reaches a neighbour.
constexpr int kObjectGap = 6;
constexpr int kOccluderMargin = 3;
constexpr int kPlacementAttempts = 64;

nlohmann::json box_to_json(const Box& b) { return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}); }

Box box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [x0,y0,x1,y1]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

void fill_box(Tensor& image, const Box& box, double value) {
  const int size = static_cast<int>(image.dim(1));
  const Box b = clip(box, size, size);
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) image(0, y, x) = value;
  }
}

void draw_pedestrian(Tensor& image, const Box& box, double intensity, double texture) {
  const int size = static_cast<int>(image.dim(1));
  const int w = box.width(), h = box.height();
  const double cx = box.center_x();
  const int radius = std::max(2, static_cast<int>(std::lround(0.22 * w)));
  const double head_cy = box.y0 + radius + 0.5;
  const int torso_top = box.y0 + 2 * radius + 1;
  const int legs_top = box.y0 + static_cast<int>(std::lround(0.6 * h));
  const double torso_half = 0.36 * w;
  const double leg_half = 0.13 * w;
  const double leg_offset = 0.2 * w;

  for (int y = std::max(0, box.y0); y < std::min(size, box.y1); ++y) {
    const double stripe = ((y - box.y0) / 2) % 2 == 0 ? -texture : 0.0;
    for (int x = std::max(0, box.x0); x < std::min(size, box.x1); ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      if (y < torso_top) {
        const double dx = px - cx, dy = py - head_cy;
        inside = dx * dx + dy * dy <= double(radius) * radius;
      } else if (y < legs_top) {
        inside = std::abs(px - cx) <= torso_half;
      } else {
        inside = std::abs(px - (cx - leg_offset)) <= leg_half || std::abs(px - (cx + leg_offset)) <= leg_half;
      }
      if (inside) image(0, y, x) = intensity + (y >= torso_top ? stripe : 0.0);
    }
  }
}

void draw_occluder(Tensor& image, const Box& box, double intensity, double texture) {
  const int size = static_cast<int>(image.dim(1));
  const Box b = clip(box, size, size);
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) image(0, y, x) = intensity + ((x / 2) % 2 == 0 ? 0.5 * texture : 0.0);
  }
}

bool overlaps_any(const Box& b, const std::vector<SceneObject>& objects, int gap) {
  for (const auto& o : objects) {
    if (b.x0 < o.box.x1 + gap && o.box.x0 < b.x1 + gap) return true;
  }
  return false;
}

// Occluder covering `target` of the object, from below or from one side.
Box make_occluder(const Box& obj, double target, CounterRng& rng, int size) {
  const int margin_a = rng.uniform_int(0, kOccluderMargin);
  const int margin_b = rng.uniform_int(0, kOccluderMargin);
  Box occ;
  if (rng.bernoulli(0.7)) {
    const int rows = std::clamp(static_cast<int>(std::lround(target * obj.height())), 1, obj.height() - 1);
    occ = {obj.x0 - margin_a, obj.y1 - rows, obj.x1 + margin_b, obj.y1 + rng.uniform_int(0, kOccluderMargin)};
  } else {
    const int cols = std::clamp(static_cast<int>(std::lround(target * obj.width())), 1, obj.width() - 1);
    if (rng.bernoulli(0.5)) {
      occ = {obj.x0 - rng.uniform_int(0, kOccluderMargin), obj.y0 - margin_a, obj.x0 + cols, obj.y1 + margin_b};
    } else {
      occ = {obj.x1 - cols, obj.y0 - margin_a, obj.x1 + rng.uniform_int(0, kOccluderMargin), obj.y1 + margin_b};
    }
  }
  return clip(occ, size, size);
}

}  // namespace

OcclusionTag classify_occlusion(int height, double fraction) {
  if (height <= kMinSubsetHeight) return OcclusionTag::Small;
  if (fraction >= kHeavyLower) return OcclusionTag::Heavy;
  if (fraction > kPartialLower) return OcclusionTag::Partial;
  return OcclusionTag::Reasonable;
}

std::string_view to_string(OcclusionTag tag) {
  switch (tag) {
    case OcclusionTag::Reasonable: return "reasonable";
    case OcclusionTag::Partial: return "partial";
    case OcclusionTag::Heavy: return "heavy";
    case OcclusionTag::Small: return "small";
  }
  return "small";
}

OcclusionTag occlusion_tag_from_string(std::string_view name) {
  for (auto tag : {OcclusionTag::Reasonable, OcclusionTag::Partial, OcclusionTag::Heavy, OcclusionTag::Small}) {
    if (to_string(tag) == name) return tag;
  }
  throw std::invalid_argument("unknown occlusion subset '" + std::string(name) + "'");
}

void DatasetSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("dataset spec: " + what); };
  if (scenes < 0) fail("scenes must be >= 0");
  if (min_objects < 1 || max_objects < min_objects) fail("need 1 <= min_objects <= max_objects");
  if (render.image_size < 16) fail("image_size must be >= 16");
  if (min_height < 4 || max_height < min_height || max_height > render.image_size) {
    fail("need 4 <= min_height <= max_height <= image_size");
  }
  for (double share : {unoccluded_share, partial_share, heavy_share}) {
    if (share < 0.0) fail("occlusion shares must be non-negative");
  }
  if (unoccluded_share + partial_share + heavy_share <= 0.0) fail("occlusion shares sum to zero");
  for (double f : {partial_min, partial_max, heavy_min, heavy_max}) {
    if (!(f >= 0.0 && f < 1.0)) fail("target occlusion fractions must lie in [0, 1)");
  }
  if (partial_max < partial_min || heavy_max < heavy_min) fail("occlusion ranges must be ordered");
  if (max_distractors < 0) fail("max_distractors must be >= 0");
  if (render.noise < 0.0 || render.texture < 0.0) fail("noise and texture must be >= 0");
}

void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = nlohmann::json{{"scenes", s.scenes},
                     {"min_objects", s.min_objects},
                     {"max_objects", s.max_objects},
                     {"min_height", s.min_height},
                     {"max_height", s.max_height},
                     {"unoccluded_share", s.unoccluded_share},
                     {"partial_share", s.partial_share},
                     {"heavy_share", s.heavy_share},
                     {"partial_range", {s.partial_min, s.partial_max}},
                     {"heavy_range", {s.heavy_min, s.heavy_max}},
                     {"max_distractors", s.max_distractors},
                     {"image_size", s.render.image_size},
                     {"background", s.render.background},
                     {"noise", s.render.noise},
                     {"texture", s.render.texture}};
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
  if (!j.is_object()) throw std::invalid_argument("dataset spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "scenes") s.scenes = value.get<int>();
    else if (key == "min_objects") s.min_objects = value.get<int>();
    else if (key == "max_objects") s.max_objects = value.get<int>();
    else if (key == "min_height") s.min_height = value.get<int>();
    else if (key == "max_height") s.max_height = value.get<int>();
    else if (key == "unoccluded_share") s.unoccluded_share = value.get<double>();
    else if (key == "partial_share") s.partial_share = value.get<double>();
    else if (key == "heavy_share") s.heavy_share = value.get<double>();
    else if (key == "partial_range") {
      s.partial_min = value.at(0).get<double>();
      s.partial_max = value.at(1).get<double>();
    } else if (key == "heavy_range") {
      s.heavy_min = value.at(0).get<double>();
      s.heavy_max = value.at(1).get<double>();
    } else if (key == "max_distractors") s.max_distractors = value.get<int>();
    else if (key == "image_size") s.render.image_size = value.get<int>();
    else if (key == "background") s.render.background = value.get<double>();
    else if (key == "noise") s.render.noise = value.get<double>();
    else if (key == "texture") s.render.texture = value.get<double>();
    else throw std::invalid_argument("dataset spec: unknown key '" + key + "'");
  }
  s.validate();
}

double occlusion_fraction(const Box& object, const std::vector<Box>& occluders) {
  if (object.empty()) throw BoxError("occlusion_fraction: empty object box " + to_string(object));
  long covered = 0;
  for (int y = object.y0; y < object.y1; ++y) {
    for (int x = object.x0; x < object.x1; ++x) {
      for (const Box& occ : occluders) {
        if (x >= occ.x0 && x < occ.x1 && y >= occ.y0 && y < occ.y1) {
          ++covered;
          break;
        }
      }
    }
  }
  return double(covered) / double(object.area());
}

Scene generate_scene(const DatasetSpec& spec, std::uint64_t seed, int index, std::string* issue) {
  const int size = spec.render.image_size;
  CounterRng rng(seed, static_cast<std::uint64_t>(index), kGeometryStream);
  Scene scene;
  scene.seed = seed;
  scene.index = index;
  scene.render = spec.render;

  const int wanted = rng.uniform_int(spec.min_objects, spec.max_objects);
  for (int attempt = 0; attempt < kPlacementAttempts && static_cast<int>(scene.objects.size()) < wanted; ++attempt) {
    const int h = rng.uniform_int(spec.min_height, spec.max_height);
    const int w = std::max(3, static_cast<int>(std::lround(kPedestrianAspect * h)));
    const int x0 = rng.uniform_int(0, size - w);
    const int y0 = rng.uniform_int(0, size - h);
    const Box placed{x0, y0, x0 + w, y0 + h};
    if (overlaps_any(placed, scene.objects, kObjectGap)) continue;
    scene.objects.push_back({placed, 0.0, OcclusionTag::Reasonable});
  }
  if (issue && static_cast<int>(scene.objects.size()) < wanted) {
    *issue = "scene " + std::to_string(index) + ": placed " + std::to_string(scene.objects.size()) + " of " +
             std::to_string(wanted) + " objects";
  }

  const double total_share = spec.unoccluded_share + spec.partial_share + spec.heavy_share;
  for (const auto& obj : scene.objects) {
    const double pick = rng.uniform() * total_share;
    double target = 0.0;
    if (pick < spec.unoccluded_share) {
      continue;
    } else if (pick < spec.unoccluded_share + spec.partial_share) {
      target = rng.uniform(spec.partial_min, spec.partial_max);
    } else {
      target = rng.uniform(spec.heavy_min, spec.heavy_max);
    }
    const Box occ = make_occluder(obj.box, target, rng, size);
    if (!occ.empty()) scene.occluders.push_back(occ);
  }
  for (auto& obj : scene.objects) {
    obj.occlusion = occlusion_fraction(obj.box, scene.occluders);
    obj.subset = classify_occlusion(obj.box.height(), obj.occlusion);
  }

  const int distractors = rng.uniform_int(0, spec.max_distractors);
  for (int d = 0; d < distractors; ++d) {
    Box b;
    if (rng.bernoulli(0.5)) {
      // pole: tall, thin, no head
      const int w = rng.uniform_int(3, 6), h = rng.uniform_int(30, std::min(size, 80));
      const int x0 = rng.uniform_int(0, size - w), y0 = rng.uniform_int(0, size - h);
      b = {x0, y0, x0 + w, y0 + h};
    } else {
      // blob
      const int s = rng.uniform_int(8, 16);
      const int x0 = rng.uniform_int(0, size - s), y0 = rng.uniform_int(0, size - s);
      b = {x0, y0, x0 + s, y0 + s};
    }
    bool clear = true;
    for (const auto& obj : scene.objects) clear = clear && intersect(b, obj.box).empty();
    if (clear) scene.distractors.push_back(b);
  }

  scene.image = render_scene(scene);
  return scene;
}

GenerateResult generate(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  GenerateResult result;
  result.scenes.reserve(static_cast<std::size_t>(spec.scenes));
  for (int i = 0; i < spec.scenes; ++i) {
    std::string issue;
    result.scenes.push_back(generate_scene(spec, seed, i, &issue));
    if (!issue.empty()) result.issues.push_back(std::move(issue));
  }
  return result;
}

Tensor render_scene(const Scene& scene) {
  const RenderParams& p = scene.render;
  const int size = p.image_size;
  CounterRng rng(scene.seed, static_cast<std::uint64_t>(scene.index), kRenderStream);
  Tensor image({1, size, size}, p.background);

  for (const Box& d : scene.distractors) fill_box(image, d, rng.uniform(0.55, 0.95));
  for (const auto& obj : scene.objects) draw_pedestrian(image, obj.box, rng.uniform(0.65, 0.95), p.texture);
  for (const Box& occ : scene.occluders) draw_occluder(image, occ, rng.uniform(0.02, 0.12), p.texture);

  for (double& v : image.values()) v = std::clamp(v + p.noise * rng.noise(), 0.0, 1.0);
  return image;
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"box", box_to_json(o.box)}, {"occ", o.occlusion}, {"subset", to_string(o.subset)}});
  }
  nlohmann::json occluders = nlohmann::json::array();
  for (const auto& b : scene.occluders) occluders.push_back(box_to_json(b));
  nlohmann::json distractors = nlohmann::json::array();
  for (const auto& b : scene.distractors) distractors.push_back(box_to_json(b));
  return {{"seed", scene.seed},
          {"index", scene.index},
          {"objects", std::move(objects)},
          {"occluders", std::move(occluders)},
          {"distractors", std::move(distractors)},
          {"render",
           {{"image_size", scene.render.image_size},
            {"background", scene.render.background},
            {"noise", scene.render.noise},
            {"texture", scene.render.texture}}}};
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene scene;
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.index = j.value("index", 0);
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    obj.box = box_from_json(o.at("box"));
    obj.occlusion = o.at("occ").get<double>();
    obj.subset = o.contains("subset") ? occlusion_tag_from_string(o.at("subset").get<std::string>())
                                      : classify_occlusion(obj.box.height(), obj.occlusion);
    scene.objects.push_back(obj);
  }
  for (const auto& b : j.at("occluders")) scene.occluders.push_back(box_from_json(b));
  if (j.contains("distractors")) {
    for (const auto& b : j.at("distractors")) scene.distractors.push_back(box_from_json(b));
  }
  if (j.contains("render")) {
    const auto& r = j.at("render");
    scene.render.image_size = r.value("image_size", scene.render.image_size);
    scene.render.background = r.value("background", scene.render.background);
    scene.render.noise = r.value("noise", scene.render.noise);
    scene.render.texture = r.value("texture", scene.render.texture);
  }
  for (const auto& o : scene.objects) {
    if (!o.box.within(scene.render.image_size, scene.render.image_size) || o.box.empty()) {
      throw std::invalid_argument("scene " + std::to_string(scene.index) + ": object box " + to_string(o.box) +
                                  " outside the image");
    }
  }
  scene.image = render_scene(scene);
  return scene;
}

void write_dataset(std::ostream& os, const std::vector<Scene>& scenes) {
  for (const auto& s : scenes) os << scene_to_json(s).dump() << '\n';
  if (!os) throw std::runtime_error("failed writing dataset");
}

void write_dataset(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(os, scenes);
}

std::vector<Scene> read_dataset(std::istream& is) {
  std::vector<Scene> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return scenes;
}

std::vector<Scene> read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  return read_dataset(is);
}

void write_pgm(const std::filesystem::path& path, const Tensor& plane) {
  const Index rows = plane.rank() == 3 ? plane.dim(1) : plane.dim(0);
  const Index cols = plane.rank() == 3 ? plane.dim(2) : plane.dim(1);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (Index i = 0; i < rows * cols; ++i) {
    const double v = std::clamp(plane[i], 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace fcnet
