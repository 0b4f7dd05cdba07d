#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arrange/grid.hpp"

namespace arrange {

enum class ObjectKind { block, ball, bowl, box, zone };
inline constexpr int kKindCount = 5;

std::string_view kind_name(ObjectKind kind);
/// Accepts singular and plural nouns ("block", "blocks", "boxes").
std::optional<ObjectKind> parse_kind(std::string_view word);
bool is_pickable(ObjectKind kind);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

struct PaletteColor {
  std::string name;
  Rgb rgb;
};

inline constexpr int kPaletteSize = 12;

/// The 12 named colors. No two entries share a chromaticity, so a color is
/// identified by its RGB direction regardless of intensity.
const std::vector<PaletteColor>& palette();
/// Index of a palette color by name, or -1.
int palette_index(std::string_view name);
const PaletteColor& palette_color(std::string_view name);

enum class Split { seen, unseen };
std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct ColorSplit {
  std::vector<std::string> seen_colors;
  std::vector<std::string> unseen_colors;

  /// 8 seen / 4 unseen.
  static const ColorSplit& standard();
  const std::vector<std::string>& colors(Split split) const {
    return split == Split::seen ? seen_colors : unseen_colors;
  }
};

/// Binary stencil as cell offsets relative to the owning object's pose.
class Footprint {
 public:
  Footprint() = default;
  explicit Footprint(std::vector<Offset> cells);

  /// h x w rectangle whose cell (anchor.dr, anchor.dc) sits on the pose.
  static Footprint rectangle(int h, int w, Offset anchor);
  /// Odd-sided square centered on the pose.
  static Footprint square(int side);
  /// Cells with dr^2 + dc^2 <= radius_sq.
  static Footprint disc(int radius_sq);

  const std::vector<Offset>& cells() const { return cells_; }
  std::size_t area() const { return cells_.size(); }
  bool contains(Offset o) const;

  /// Footprint after a rigid counter-clockwise rotation about `pivot`, expressed
  /// relative to the pivot. Uses the same inverse nearest-neighbour mapping as
  /// rotate_crop, so it reproduces what a rotated observation crop shows.
  Footprint rotated_about(Offset pivot, int degrees) const;

  /// Inclusive bounds (min_dr, min_dc, max_dr, max_dc); all zero when empty.
  std::array<int, 4> bounds() const;

  bool operator==(const Footprint&) const = default;

 private:
  std::vector<Offset> cells_;  // sorted row-major, unique
};

struct Pose {
  int u = 0;
  int v = 0;
  int theta = 0;  // degrees, [0, 360)
  bool operator==(const Pose&) const = default;
};

struct SceneObject {
  int id = 0;
  ObjectKind kind = ObjectKind::block;
  std::string color;
  Pose pose;
  Footprint footprint;

  std::vector<Pixel> pixels() const;
  bool covers(Pixel p) const;
  bool operator==(const SceneObject&) const = default;
};

inline constexpr int kDefaultGridSize = 64;

struct Scene {
  int grid_h = kDefaultGridSize;
  int grid_w = kDefaultGridSize;
  Rgb background{0, 0, 0};
  std::vector<SceneObject> objects;
  std::uint64_t rng_seed = 0;

  const SceneObject* find(int id) const;
  SceneObject* find(int id);
  bool operator==(const Scene&) const = default;
};

enum class TaskFamily { put_in, pack_in, separate_piles };

struct TaskSpec {
  std::string name;
  TaskFamily family = TaskFamily::put_in;
  ObjectKind pickable_kind = ObjectKind::block;
  int pickable_count = 2;  // including the target (pile members count once each)
  int pile_size = 1;
  ObjectKind container_kind = ObjectKind::bowl;
  int container_count = 2;
  int grid_size = kDefaultGridSize;
  /// Half-width of the window around each pickable that must be free of other
  /// objects. A 15-pixel pick crop centered anywhere on a 5x5 block then shows
  /// only that block.
  int clearance = 9;
};

/// Stencil used for newly generated objects of each kind.
Footprint default_footprint(ObjectKind kind);

const std::vector<TaskSpec>& task_roster();
const TaskSpec& task_by_name(std::string_view name);

/// Placement half of an action: target pixel plus rotation in degrees.
struct PlaceAction {
  int u = 0;
  int v = 0;
  int theta = 0;
  bool operator==(const PlaceAction&) const = default;
};

struct Episode {
  Scene scene;
  std::string task;
  Split split = Split::seen;
  std::uint64_t seed = 0;
  std::string instruction;
  int target_object_id = 0;
  int goal_container_id = 0;
  Pixel gt_pick;
  PlaceAction gt_place;
  bool operator==(const Episode&) const = default;
};

inline constexpr int kMaxPlacementAttempts = 1000;
inline constexpr double kSuccessContainment = 0.95;

Scene generate_scene(const TaskSpec& task, Split split, std::uint64_t seed);
Grid2D render(const Scene& scene);
Episode make_episode(const TaskSpec& task, Split split, std::uint64_t seed);

/// Moves the topmost pickable under `pick` rigidly: the grasped pixel lands on
/// (place.u, place.v), the body turns by place.theta about it, and the pose
/// becomes (place.u, place.v, theta_old + place.theta) shifted back into bounds
/// if needed. Picking background leaves the scene unchanged.
Scene apply_action(const Scene& scene, Pixel pick, PlaceAction place);

/// Objects whose placement decides the episode (the target, or the whole pile).
std::vector<int> target_group(const Scene& scene, const Episode& episode);
/// Fraction of target-group objects with >= 95% of their pixels in the goal region.
double object_fraction(const Scene& scene, const Episode& episode);
bool check_success(const Scene& scene, const Episode& episode);

/// Ground-truth action for the current state, or nothing when already solved.
struct Action {
  Pixel pick;
  PlaceAction place;
};
std::optional<Action> ground_truth_action(const Scene& scene, const Episode& episode);

/// Containment fraction of one object's pixels inside a container's region.
double containment(const SceneObject& object, const SceneObject& container);

// Serialization: JSON documents tagged "arrange-scene/1".
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
std::string episode_to_json(const Episode& episode);
Episode episode_from_json(const std::string& text);

}  // namespace arrange
