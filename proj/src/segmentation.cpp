#include "arrange/segmentation.hpp"

#include <algorithm>
#include <map>

namespace arrange {

namespace {

bool same_color(const Grid2D& obs, int r0, int c0, int r1, int c1) {
  for (int k = 0; k < obs.channels(); ++k)
    if (obs.at(r0, c0, k) != obs.at(r1, c1, k)) return false;
  return true;
}

bool is_background(const Grid2D& obs, int r, int c, Rgb bg) {
  return obs.at(r, c, 0) == bg.r && obs.at(r, c, 1) == bg.g && obs.at(r, c, 2) == bg.b;
}

}  // namespace

SegmentationResult from_labels(const std::vector<int>& labels, int height, int width) {
  struct Acc {
    InstanceMask inst;
    std::size_t first = 0;
  };
  std::map<int, Acc> acc;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * width + c;
      const int label = labels[i];
      if (label <= 0) continue;
      auto [it, fresh] = acc.try_emplace(label);
      InstanceMask& m = it->second.inst;
      if (fresh) {
        m.height = height;
        m.width = width;
        m.mask.assign(static_cast<std::size_t>(height) * width, 0);
        m.bbox = {r, c, r, c};
        it->second.first = i;
      }
      m.mask[i] = 1;
      ++m.area;
      m.bbox.row0 = std::min(m.bbox.row0, r);
      m.bbox.col0 = std::min(m.bbox.col0, c);
      m.bbox.row1 = std::max(m.bbox.row1, r);
      m.bbox.col1 = std::max(m.bbox.col1, c);
    }
  }
  std::vector<Acc> items;
  for (auto& [label, a] : acc) items.push_back(std::move(a));
  std::stable_sort(items.begin(), items.end(), [](const Acc& a, const Acc& b) {
    if (a.inst.bbox.row0 != b.inst.bbox.row0) return a.inst.bbox.row0 < b.inst.bbox.row0;
    if (a.inst.bbox.col0 != b.inst.bbox.col0) return a.inst.bbox.col0 < b.inst.bbox.col0;
    return a.first < b.first;
  });
  SegmentationResult out{height, width, {}};
  for (auto& item : items) {
    item.inst.id = static_cast<int>(out.instances.size()) + 1;
    out.instances.push_back(std::move(item.inst));
  }
  return out;
}

SegmentationResult segment(const Grid2D& obs, Rgb background, int min_area) {
  if (obs.channels() != 3) throw ShapeError("segment: observation must have 3 channels");
  const int h = obs.height();
  const int w = obs.width();
  std::vector<int> labels(static_cast<std::size_t>(h) * w, 0);
  std::vector<Pixel> stack;
  std::vector<Pixel> members;
  int next = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      if (labels[i] != 0 || is_background(obs, r, c, background)) continue;
      ++next;
      labels[i] = next;
      stack.assign(1, {r, c});
      members.clear();
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        members.push_back(p);
        const Pixel nbrs[4] = {{p.u - 1, p.v}, {p.u + 1, p.v}, {p.u, p.v - 1}, {p.u, p.v + 1}};
        for (const Pixel& q : nbrs) {
          if (!obs.in_bounds(q.u, q.v)) continue;
          int& lq = labels[static_cast<std::size_t>(q.u) * w + q.v];
          if (lq != 0 || !same_color(obs, p.u, p.v, q.u, q.v)) continue;
          lq = next;
          stack.push_back(q);
        }
      }
      if (static_cast<int>(members.size()) < min_area) {
        for (const Pixel& p : members) labels[static_cast<std::size_t>(p.u) * w + p.v] = -1;
      }
    }
  }
  return from_labels(labels, h, w);
}

Grid2D crop(const Grid2D& obs, const InstanceMask& inst, int pad) {
  if (pad < 0) throw ParameterError("crop: pad must be >= 0");
  if (inst.height != obs.height() || inst.width != obs.width()) {
    throw ShapeError("crop: mask size does not match the observation");
  }
  const int side = std::max(inst.bbox.height(), inst.bbox.width()) + 2 * pad;
  // Top-left of a side x side window sharing the bbox center (rounded down for odd slack).
  const int r0 = inst.bbox.row0 - (side - inst.bbox.height()) / 2;
  const int c0 = inst.bbox.col0 - (side - inst.bbox.width()) / 2;
  Grid2D out(side, side, obs.channels());
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int sr = r0 + r;
      const int sc = c0 + c;
      if (!inst.contains(sr, sc)) continue;
      for (int k = 0; k < obs.channels(); ++k) out.at(r, c, k) = obs.at(sr, sc, k);
    }
  }
  return out;
}

GrayImage export_masks(const SegmentationResult& seg) {
  if (seg.instances.size() > 255) throw FormatError("export_masks: more than 255 instances");
  GrayImage img{seg.height, seg.width, 255, std::vector<std::uint16_t>(static_cast<std::size_t>(seg.height) * seg.width, 0)};
  for (const auto& inst : seg.instances)
    for (std::size_t i = 0; i < inst.mask.size(); ++i)
      if (inst.mask[i]) img.values[i] = static_cast<std::uint16_t>(inst.id);
  return img;
}

SegmentationResult import_masks(const std::string& pgm_bytes, int height, int width) {
  const GrayImage img = decode_pgm(pgm_bytes);
  if (img.maxval > 255) throw FormatError("import_masks: label map must be 8-bit");
  if (img.height != height || img.width != width) {
    throw FormatError("import_masks: label map is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                      ", observation is " + std::to_string(height) + "x" + std::to_string(width));
  }
  // Dense ids follow the same bbox ordering as segment(), so every result
  // satisfies one ordering rule and segment -> export -> import is the identity.
  const std::vector<int> labels(img.values.begin(), img.values.end());
  return from_labels(labels, height, width);
}

}  // namespace arrange
