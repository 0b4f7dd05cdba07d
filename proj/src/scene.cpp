#include "arrange/scene.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

#include "arrange/rng.hpp"

namespace arrange {

using nlohmann::json;

std::string_view kind_name(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::block: return "block";
    case ObjectKind::ball: return "ball";
    case ObjectKind::bowl: return "bowl";
    case ObjectKind::box: return "box";
    case ObjectKind::zone: return "zone";
  }
  return "block";
}

std::optional<ObjectKind> parse_kind(std::string_view word) {
  static const std::map<std::string_view, ObjectKind> words = {
      {"block", ObjectKind::block}, {"blocks", ObjectKind::block}, {"ball", ObjectKind::ball},
      {"balls", ObjectKind::ball},   {"bowl", ObjectKind::bowl},     {"bowls", ObjectKind::bowl},
      {"box", ObjectKind::box},      {"boxes", ObjectKind::box},     {"zone", ObjectKind::zone},
      {"zones", ObjectKind::zone}};
  const auto it = words.find(word);
  if (it == words.end()) return std::nullopt;
  return it->second;
}

bool is_pickable(ObjectKind kind) { return kind == ObjectKind::block || kind == ObjectKind::ball; }

const std::vector<PaletteColor>& palette() {
  static const std::vector<PaletteColor> colors = {
      {"red", {220, 30, 30}},     {"green", {40, 180, 60}},   {"blue", {40, 70, 220}},
      {"yellow", {230, 210, 40}}, {"brown", {140, 90, 50}},   {"gray", {128, 128, 128}},
      {"cyan", {40, 200, 210}},   {"pink", {240, 130, 180}},  {"orange", {250, 140, 20}},
      {"purple", {130, 50, 190}}, {"lime", {150, 230, 40}},   {"magenta", {210, 40, 200}},
  };
  return colors;
}

int palette_index(std::string_view name) {
  const auto& p = palette();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i].name == name) return static_cast<int>(i);
  return -1;
}

const PaletteColor& palette_color(std::string_view name) {
  const int idx = palette_index(name);
  if (idx < 0) throw ParameterError("unknown palette color '" + std::string(name) + "'");
  return palette()[static_cast<std::size_t>(idx)];
}

std::string_view split_name(Split split) { return split == Split::seen ? "seen" : "unseen"; }

Split parse_split(std::string_view name) {
  if (name == "seen") return Split::seen;
  if (name == "unseen") return Split::unseen;
  throw ParameterError("unknown split '" + std::string(name) + "' (expected seen|unseen)");
}

const ColorSplit& ColorSplit::standard() {
  static const ColorSplit split{{"red", "green", "blue", "yellow", "brown", "gray", "cyan", "pink"},
                                {"orange", "purple", "lime", "magenta"}};
  return split;
}

Footprint::Footprint(std::vector<Offset> cells) : cells_(std::move(cells)) {
  std::sort(cells_.begin(), cells_.end(),
            [](const Offset& a, const Offset& b) { return a.dr != b.dr ? a.dr < b.dr : a.dc < b.dc; });
  cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
}

Footprint Footprint::rectangle(int h, int w, Offset anchor) {
  std::vector<Offset> cells;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) cells.push_back({r - anchor.dr, c - anchor.dc});
  return Footprint(std::move(cells));
}

Footprint Footprint::square(int side) { return rectangle(side, side, {side / 2, side / 2}); }

Footprint Footprint::disc(int radius_sq) {
  std::vector<Offset> cells;
  const int r = static_cast<int>(std::sqrt(static_cast<double>(radius_sq)));
  for (int dr = -r; dr <= r; ++dr)
    for (int dc = -r; dc <= r; ++dc)
      if (dr * dr + dc * dc <= radius_sq) cells.push_back({dr, dc});
  return Footprint(std::move(cells));
}

bool Footprint::contains(Offset o) const {
  return std::binary_search(cells_.begin(), cells_.end(), o, [](const Offset& a, const Offset& b) {
    return a.dr != b.dr ? a.dr < b.dr : a.dc < b.dc;
  });
}

Footprint Footprint::rotated_about(Offset pivot, int degrees) const {
  double reach = 0.0;
  for (const Offset& c : cells_) {
    reach = std::max(reach, std::hypot(c.dr - pivot.dr, c.dc - pivot.dc));
  }
  const int r = static_cast<int>(std::ceil(reach)) + 1;
  std::vector<Offset> out;
  for (int dr = -r; dr <= r; ++dr) {
    for (int dc = -r; dc <= r; ++dc) {
      const Offset src = rotation_source_offset(dr, dc, degrees);
      if (contains({pivot.dr + src.dr, pivot.dc + src.dc})) out.push_back({dr, dc});
    }
  }
  return Footprint(std::move(out));
}

std::array<int, 4> Footprint::bounds() const {
  if (cells_.empty()) return {0, 0, 0, 0};
  std::array<int, 4> b{cells_.front().dr, cells_.front().dc, cells_.front().dr, cells_.front().dc};
  for (const Offset& c : cells_) {
    b[0] = std::min(b[0], c.dr);
    b[1] = std::min(b[1], c.dc);
    b[2] = std::max(b[2], c.dr);
    b[3] = std::max(b[3], c.dc);
  }
  return b;
}

std::vector<Pixel> SceneObject::pixels() const {
  std::vector<Pixel> out;
  out.reserve(footprint.area());
  for (const Offset& c : footprint.cells()) out.push_back({pose.u + c.dr, pose.v + c.dc});
  return out;
}

bool SceneObject::covers(Pixel p) const { return footprint.contains({p.u - pose.u, p.v - pose.v}); }

const SceneObject* Scene::find(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

SceneObject* Scene::find(int id) {
  for (auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

const std::vector<TaskSpec>& task_roster() {
  static const std::vector<TaskSpec> roster = {
      {"put-block-in-bowl", TaskFamily::put_in, ObjectKind::block, 2, 1, ObjectKind::bowl, 2},
      {"pack-block-in-box", TaskFamily::pack_in, ObjectKind::block, 2, 1, ObjectKind::box, 2},
      {"separating-piles", TaskFamily::separate_piles, ObjectKind::block, 4, 3, ObjectKind::zone, 2},
  };
  return roster;
}

const TaskSpec& task_by_name(std::string_view name) {
  for (const auto& t : task_roster())
    if (t.name == name) return t;
  throw ParameterError("unknown task '" + std::string(name) + "'");
}

Footprint default_footprint(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::block: return Footprint::square(5);
    case ObjectKind::ball: return Footprint::disc(5);
    case ObjectKind::bowl: return Footprint::disc(42);
    case ObjectKind::box: return Footprint::square(13);
    case ObjectKind::zone: return Footprint::square(17);
  }
  return Footprint::square(5);
}

namespace {

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

bool fits_in_grid(const Scene& scene, const SceneObject& o, int margin) {
  const auto b = o.footprint.bounds();
  return o.pose.u + b[0] >= margin && o.pose.v + b[1] >= margin && o.pose.u + b[2] < scene.grid_h - margin &&
         o.pose.v + b[3] < scene.grid_w - margin;
}

int chebyshev(Pixel a, Pixel b) { return std::max(std::abs(a.u - b.u), std::abs(a.v - b.v)); }

// Candidate placement rules: containers keep a 2-pixel gap from each other;
// every pickable's clearance window holds no pixel of any other object.
bool placement_ok(const SceneObject& cand, const std::vector<SceneObject>& placed, int clearance) {
  const auto cand_pixels = cand.pixels();
  for (const SceneObject& other : placed) {
    const auto other_pixels = other.pixels();
    if (is_pickable(cand.kind)) {
      for (const Pixel& p : other_pixels)
        if (chebyshev(p, {cand.pose.u, cand.pose.v}) <= clearance) return false;
    }
    if (is_pickable(other.kind)) {
      for (const Pixel& p : cand_pixels)
        if (chebyshev(p, {other.pose.u, other.pose.v}) <= clearance) return false;
    }
    if (!is_pickable(cand.kind) && !is_pickable(other.kind)) {
      for (const Pixel& p : cand_pixels)
        for (const Pixel& q : other_pixels)
          if (chebyshev(p, q) <= 2) return false;
    }
  }
  return true;
}

}  // namespace

Scene generate_scene(const TaskSpec& task, Split split, std::uint64_t seed) {
  Scene scene;
  scene.grid_h = task.grid_size;
  scene.grid_w = task.grid_size;
  scene.rng_seed = seed;
  Rng rng(derive_seed(seed, name_hash(task.name) ^ (split == Split::seen ? 0x5EE11ULL : 0x0A5EE11ULL)));

  std::vector<std::string> colors = ColorSplit::standard().colors(split);
  const int distractors = task.pickable_count - task.pile_size;
  const int groups = 1 + distractors + task.container_count;
  if (groups > static_cast<int>(colors.size())) {
    throw GenerationError("task '" + task.name + "' needs " + std::to_string(groups) + " distinct colors, split has " +
                          std::to_string(colors.size()));
  }
  rng.shuffle(colors);

  std::vector<SceneObject> objects;
  int next_id = 1;
  for (int i = 0; i < task.pile_size; ++i)
    objects.push_back({next_id++, task.pickable_kind, colors[0], {}, default_footprint(task.pickable_kind)});
  for (int i = 0; i < distractors; ++i)
    objects.push_back(
        {next_id++, task.pickable_kind, colors[1 + i], {}, default_footprint(task.pickable_kind)});
  for (int i = 0; i < task.container_count; ++i)
    objects.push_back({next_id++, task.container_kind, colors[1 + distractors + i], {},
                       default_footprint(task.container_kind)});

  // Containers first: they are the hardest to fit.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (!is_pickable(objects[i].kind)) order.push_back(i);
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (is_pickable(objects[i].kind)) order.push_back(i);

  std::vector<SceneObject> placed;
  for (std::size_t idx : order) {
    SceneObject cand = objects[idx];
    const auto b = cand.footprint.bounds();
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
      cand.pose.u = static_cast<int>(rng.uniform_int(1 - b[0], scene.grid_h - 2 - b[2]));
      cand.pose.v = static_cast<int>(rng.uniform_int(1 - b[1], scene.grid_w - 2 - b[3]));
      ok = fits_in_grid(scene, cand, 1) && placement_ok(cand, placed, task.clearance);
    }
    if (!ok) {
      throw GenerationError("could not place object " + std::to_string(cand.id) + " of task '" + task.name +
                            "' after " + std::to_string(kMaxPlacementAttempts) + " attempts (seed " +
                            std::to_string(seed) + ")");
    }
    objects[idx] = cand;
    placed.push_back(cand);
  }
  scene.objects = std::move(objects);
  return scene;
}

Grid2D render(const Scene& scene) {
  Grid2D img(scene.grid_h, scene.grid_w, 3);
  for (int r = 0; r < scene.grid_h; ++r) {
    for (int c = 0; c < scene.grid_w; ++c) {
      img.at(r, c, 0) = scene.background.r;
      img.at(r, c, 1) = scene.background.g;
      img.at(r, c, 2) = scene.background.b;
    }
  }
  auto paint = [&](const SceneObject& o) {
    const Rgb rgb = palette_color(o.color).rgb;
    for (const Pixel& p : o.pixels()) {
      if (!img.in_bounds(p.u, p.v)) continue;
      img.at(p.u, p.v, 0) = rgb.r;
      img.at(p.u, p.v, 1) = rgb.g;
      img.at(p.u, p.v, 2) = rgb.b;
    }
  };
  // Earlier-listed objects end up on top within each layer.
  for (auto it = scene.objects.rbegin(); it != scene.objects.rend(); ++it)
    if (!is_pickable(it->kind)) paint(*it);
  for (auto it = scene.objects.rbegin(); it != scene.objects.rend(); ++it)
    if (is_pickable(it->kind)) paint(*it);
  return img;
}

namespace {

std::string make_instruction(const TaskSpec& task, const SceneObject& target, const SceneObject& goal) {
  const std::string noun(kind_name(target.kind));
  const std::string cnoun(kind_name(goal.kind));
  switch (task.family) {
    case TaskFamily::put_in: return "put the " + target.color + " " + noun + " in a " + goal.color + " " + cnoun;
    case TaskFamily::pack_in:
      return "pack the " + target.color + " " + noun + " in the " + goal.color + " " + cnoun;
    case TaskFamily::separate_piles:
      return "push the pile of " + target.color + " " + noun + "s into the " + goal.color + " " + cnoun;
  }
  return {};
}

Pixel centroid_pixel(const std::vector<Pixel>& pixels) {
  double mu = 0.0;
  double mv = 0.0;
  for (const Pixel& p : pixels) {
    mu += p.u;
    mv += p.v;
  }
  mu /= static_cast<double>(pixels.size());
  mv /= static_cast<double>(pixels.size());
  Pixel best = pixels.front();
  double best_d = 1e300;
  for (const Pixel& p : pixels) {  // pixels are row-major sorted, so ties keep the first
    const double d = (p.u - mu) * (p.u - mu) + (p.v - mv) * (p.v - mv);
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

}  // namespace

Episode make_episode(const TaskSpec& task, Split split, std::uint64_t seed) {
  Episode ep;
  ep.scene = generate_scene(task, split, seed);
  ep.task = task.name;
  ep.split = split;
  ep.seed = seed;
  const SceneObject* target = nullptr;
  const SceneObject* goal = nullptr;
  for (const auto& o : ep.scene.objects) {
    if (!target && is_pickable(o.kind)) target = &o;
    if (!goal && !is_pickable(o.kind)) goal = &o;
  }
  ep.target_object_id = target->id;
  ep.goal_container_id = goal->id;
  ep.instruction = make_instruction(task, *target, *goal);
  const auto gt = ground_truth_action(ep.scene, ep);
  if (!gt) throw GenerationError("generated episode is already solved (seed " + std::to_string(seed) + ")");
  ep.gt_pick = gt->pick;
  ep.gt_place = gt->place;
  return ep;
}

Scene apply_action(const Scene& scene, Pixel pick, PlaceAction place) {
  Scene out = scene;
  for (SceneObject& o : out.objects) {
    if (!is_pickable(o.kind) || !o.covers(pick)) continue;
    const Offset grasp{pick.u - o.pose.u, pick.v - o.pose.v};
    int theta = ((place.theta % 360) + 360) % 360;
    o.footprint = o.footprint.rotated_about(grasp, theta);
    o.pose = {place.u, place.v, (o.pose.theta + theta) % 360};
    const auto b = o.footprint.bounds();
    o.pose.u = std::clamp(o.pose.u, -b[0], out.grid_h - 1 - b[2]);
    o.pose.v = std::clamp(o.pose.v, -b[1], out.grid_w - 1 - b[3]);
    return out;
  }
  return out;
}

double containment(const SceneObject& object, const SceneObject& container) {
  const auto pixels = object.pixels();
  if (pixels.empty()) return 0.0;
  std::size_t inside = 0;
  for (const Pixel& p : pixels)
    if (container.covers(p)) ++inside;
  return static_cast<double>(inside) / static_cast<double>(pixels.size());
}

std::vector<int> target_group(const Scene& scene, const Episode& episode) {
  const SceneObject* target = scene.find(episode.target_object_id);
  if (!target) return {};
  const TaskSpec* spec = nullptr;
  for (const auto& t : task_roster())
    if (t.name == episode.task) spec = &t;
  if (!spec || spec->family != TaskFamily::separate_piles) return {target->id};
  std::vector<int> group;
  for (const auto& o : scene.objects)
    if (is_pickable(o.kind) && o.kind == target->kind && o.color == target->color) group.push_back(o.id);
  return group;
}

double object_fraction(const Scene& scene, const Episode& episode) {
  const SceneObject* goal = scene.find(episode.goal_container_id);
  const auto group = target_group(scene, episode);
  if (!goal || group.empty()) return 0.0;
  int done = 0;
  for (int id : group)
    if (containment(*scene.find(id), *goal) >= kSuccessContainment) ++done;
  return static_cast<double>(done) / static_cast<double>(group.size());
}

bool check_success(const Scene& scene, const Episode& episode) { return object_fraction(scene, episode) == 1.0; }

std::optional<Action> ground_truth_action(const Scene& scene, const Episode& episode) {
  const SceneObject* goal = scene.find(episode.goal_container_id);
  if (!goal) return std::nullopt;
  const SceneObject* target = nullptr;
  for (int id : target_group(scene, episode)) {
    const SceneObject* o = scene.find(id);
    if (containment(*o, *goal) < kSuccessContainment) {
      target = o;
      break;
    }
  }
  if (!target) return std::nullopt;

  const Pixel pick = centroid_pixel(target->pixels());
  const Offset grasp{pick.u - target->pose.u, pick.v - target->pose.v};
  auto region = goal->pixels();
  double mu = 0.0;
  double mv = 0.0;
  for (const Pixel& p : region) {
    mu += p.u;
    mv += p.v;
  }
  mu /= static_cast<double>(region.size());
  mv /= static_cast<double>(region.size());
  std::stable_sort(region.begin(), region.end(), [&](const Pixel& a, const Pixel& b) {
    return (a.u - mu) * (a.u - mu) + (a.v - mv) * (a.v - mv) < (b.u - mu) * (b.u - mu) + (b.v - mv) * (b.v - mv);
  });

  std::vector<const SceneObject*> others;
  for (const auto& o : scene.objects)
    if (is_pickable(o.kind) && o.id != target->id) others.push_back(&o);

  std::vector<Footprint> rotations;
  for (int theta = 0; theta < 360; theta += RotationAngle::kStepDegrees)
    rotations.push_back(target->footprint.rotated_about(grasp, theta));

  for (const Pixel& c : region) {
    for (std::size_t k = 0; k < rotations.size(); ++k) {
      bool fits = true;
      for (const Offset& cell : rotations[k].cells()) {
        const Pixel p{c.u + cell.dr, c.v + cell.dc};
        if (p.u < 0 || p.v < 0 || p.u >= scene.grid_h || p.v >= scene.grid_w || !goal->covers(p)) {
          fits = false;
          break;
        }
        for (const SceneObject* o : others) {
          if (o->covers(p)) {
            fits = false;
            break;
          }
        }
        if (!fits) break;
      }
      if (fits) {
        return Action{pick, {c.u, c.v, static_cast<int>(k) * RotationAngle::kStepDegrees}};
      }
    }
  }
  return std::nullopt;
}

namespace {

constexpr const char* kSceneSchema = "arrange-scene/1";

json footprint_to_json(const Footprint& fp) {
  const auto b = fp.bounds();
  const int h = fp.area() ? b[2] - b[0] + 1 : 0;
  const int w = fp.area() ? b[3] - b[1] + 1 : 0;
  std::vector<int> runs;
  int current = 0;
  int length = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int bit = fp.contains({b[0] + r, b[1] + c}) ? 1 : 0;
      if (bit != current) {
        runs.push_back(length);
        current = bit;
        length = 0;
      }
      ++length;
    }
  }
  if (h * w > 0) runs.push_back(length);
  return json{{"origin", {b[0], b[1]}}, {"size", {h, w}}, {"rle", runs}};
}

Footprint footprint_from_json(const json& j) {
  const int r0 = j.at("origin").at(0).get<int>();
  const int c0 = j.at("origin").at(1).get<int>();
  const int h = j.at("size").at(0).get<int>();
  const int w = j.at("size").at(1).get<int>();
  std::vector<Offset> cells;
  int pos = 0;
  int bit = 0;
  for (const auto& run : j.at("rle")) {
    const int len = run.get<int>();
    if (len < 0 || pos + len > h * w) throw FormatError("footprint run-length data overflows its raster");
    if (bit)
      for (int k = pos; k < pos + len; ++k) cells.push_back({r0 + k / w, c0 + k % w});
    pos += len;
    bit ^= 1;
  }
  if (pos != h * w) throw FormatError("footprint run-length data does not cover its raster");
  return Footprint(std::move(cells));
}

json scene_json(const Scene& scene) {
  json palette_json = json::array();
  for (const auto& c : palette()) palette_json.push_back({{"name", c.name}, {"rgb", {c.rgb.r, c.rgb.g, c.rgb.b}}});
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"id", o.id},
                       {"kind", kind_name(o.kind)},
                       {"color", o.color},
                       {"pose", {o.pose.u, o.pose.v, o.pose.theta}},
                       {"footprint", footprint_to_json(o.footprint)}});
  }
  return json{{"schema", kSceneSchema},
              {"grid", {scene.grid_h, scene.grid_w}},
              {"background", {scene.background.r, scene.background.g, scene.background.b}},
              {"palette", palette_json},
              {"rng_seed", scene.rng_seed},
              {"objects", objects}};
}

Scene scene_from(const json& j) {
  if (j.value("schema", "") != kSceneSchema) throw FormatError("not an arrange-scene/1 document");
  Scene scene;
  scene.grid_h = j.at("grid").at(0).get<int>();
  scene.grid_w = j.at("grid").at(1).get<int>();
  const auto& bg = j.at("background");
  scene.background = {bg.at(0).get<std::uint8_t>(), bg.at(1).get<std::uint8_t>(), bg.at(2).get<std::uint8_t>()};
  scene.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.id = jo.at("id").get<int>();
    const auto kind = parse_kind(jo.at("kind").get<std::string>());
    if (!kind) throw FormatError("unknown object kind in scene document");
    o.kind = *kind;
    o.color = jo.at("color").get<std::string>();
    if (palette_index(o.color) < 0) throw FormatError("unknown color '" + o.color + "' in scene document");
    o.pose = {jo.at("pose").at(0).get<int>(), jo.at("pose").at(1).get<int>(), jo.at("pose").at(2).get<int>()};
    o.footprint = footprint_from_json(jo.at("footprint"));
    scene.objects.push_back(std::move(o));
  }
  return scene;
}

template <typename F>
auto parse_guarded(const std::string& text, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed scene document: ") + e.what());
  }
}

}  // namespace

std::string scene_to_json(const Scene& scene) { return scene_json(scene).dump(2); }

Scene scene_from_json(const std::string& text) {
  return parse_guarded(text, [](const json& j) { return scene_from(j); });
}

std::string episode_to_json(const Episode& ep) {
  json j = scene_json(ep.scene);
  j["episode"] = {{"task", ep.task},
                  {"split", split_name(ep.split)},
                  {"seed", ep.seed},
                  {"instruction", ep.instruction},
                  {"target_object_id", ep.target_object_id},
                  {"goal_container_id", ep.goal_container_id},
                  {"gt_pick", {ep.gt_pick.u, ep.gt_pick.v}},
                  {"gt_place", {ep.gt_place.u, ep.gt_place.v, ep.gt_place.theta}}};
  return j.dump(2);
}

Episode episode_from_json(const std::string& text) {
  return parse_guarded(text, [](const json& j) {
    Episode ep;
    ep.scene = scene_from(j);
    const auto& e = j.at("episode");
    ep.task = e.at("task").get<std::string>();
    ep.split = parse_split(e.at("split").get<std::string>());
    ep.seed = e.at("seed").get<std::uint64_t>();
    ep.instruction = e.at("instruction").get<std::string>();
    ep.target_object_id = e.at("target_object_id").get<int>();
    ep.goal_container_id = e.at("goal_container_id").get<int>();
    ep.gt_pick = {e.at("gt_pick").at(0).get<int>(), e.at("gt_pick").at(1).get<int>()};
    ep.gt_place = {e.at("gt_place").at(0).get<int>(), e.at("gt_place").at(1).get<int>(),
                   e.at("gt_place").at(2).get<int>()};
    return ep;
  });
}

}  // namespace arrange
