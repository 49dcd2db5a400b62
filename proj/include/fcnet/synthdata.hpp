#pragma once

// Synthetic street-like scenes: bright "pedestrian" bars with a head blob and
// striped texture, darker striped occluders, pole/blob clutter and
// low-amplitude noise. Geometry is drawn from a counter-based generator keyed
// by (dataset seed, scene index); images are re-rendered from geometry.

#include "fcnet/box.hpp"
#include "fcnet/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fcnet {

/// Occlusion-subset tag of a single object. Partial objects are also members
/// of Reasonable; Small objects (height at or below the threshold) belong to
/// no subset.
enum class OcclusionTag { Reasonable, Partial, Heavy, Small };

/// Height threshold for subset membership. 10 px on a 96 px frame keeps the
/// proportion of the usual 50 px cut on full-size street images.
inline constexpr int kMinSubsetHeight = 10;
inline constexpr double kPartialLower = 0.10;
inline constexpr double kHeavyLower = 0.35;

/// Standard pedestrian width / height.
inline constexpr double kPedestrianAspect = 0.41;

OcclusionTag classify_occlusion(int height, double occlusion_fraction);
std::string_view to_string(OcclusionTag tag);
OcclusionTag occlusion_tag_from_string(std::string_view name);

struct SceneObject {
  Box box;
  double occlusion = 0.0;
  OcclusionTag subset = OcclusionTag::Reasonable;
};

/// Appearance parameters needed to re-render a scene from its geometry.
struct RenderParams {
  int image_size = 96;
  double background = 0.25;
  double noise = 0.04;
  double texture = 0.12;

  friend bool operator==(const RenderParams&, const RenderParams&) = default;
};

struct Scene {
  std::uint64_t seed = 0;
  int index = 0;
  Tensor image;  // [1, S, S], values in [0, 1]
  std::vector<SceneObject> objects;
  std::vector<Box> occluders;
  std::vector<Box> distractors;
  RenderParams render;
};

/// Target share of objects per occlusion regime, plus scene layout ranges.
struct DatasetSpec {
  int scenes = 100;
  int min_objects = 1;
  int max_objects = 3;
  int min_height = 36;
  int max_height = 64;
  double unoccluded_share = 0.30;
  double partial_share = 0.30;
  double heavy_share = 0.40;
  double partial_min = 0.15, partial_max = 0.30;
  double heavy_min = 0.40, heavy_max = 0.75;
  int max_distractors = 3;
  RenderParams render;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetSpec& spec);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, DatasetSpec& spec);

struct GenerateResult {
  std::vector<Scene> scenes;
  /// Per-scene notes for layouts that could not meet the spec (for example
  /// fewer objects placed than requested). Generation always continues.
  std::vector<std::string> issues;
};

GenerateResult generate(const DatasetSpec& spec, std::uint64_t seed);

/// Generates one scene; `issue` receives a note if the layout fell short.
Scene generate_scene(const DatasetSpec& spec, std::uint64_t seed, int index, std::string* issue = nullptr);

/// Rasterizes a scene from its geometry and (seed, index).
Tensor render_scene(const Scene& scene);

/// Fraction of the object's pixels covered by the union of the occluders.
double occlusion_fraction(const Box& object, const std::vector<Box>& occluders);

// JSON Lines dataset file: one scene per line.
nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
void write_dataset(std::ostream& os, const std::vector<Scene>& scenes);
void write_dataset(const std::filesystem::path& path, const std::vector<Scene>& scenes);
/// Parses and re-renders every scene.
std::vector<Scene> read_dataset(std::istream& is);
std::vector<Scene> read_dataset(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) of a single-plane image with values in [0, 1].
void write_pgm(const std::filesystem::path& path, const Tensor& plane);

}  // namespace fcnet
