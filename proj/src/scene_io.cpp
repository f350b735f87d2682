// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/scene_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "bagrad/errors.hpp"
#include "bagrad/version.hpp"

namespace bagrad {

using nlohmann::json;

json pose_to_json(const Posed& p) {
  return json::array({p.q.w(), p.q.x(), p.q.y(), p.q.z(), p.t.x(), p.t.y(),
                      p.t.z()});
}

Posed pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) {
    throw ConfigError("pose: expected a 7-number array [qw,qx,qy,qz,tx,ty,tz]");
  }
  Posed p;
  p.q = Eigen::Quaterniond(j[0].get<double>(), j[1].get<double>(),
                           j[2].get<double>(), j[3].get<double>());
  p.t = Vec3d(j[4].get<double>(), j[5].get<double>(), j[6].get<double>());
  if (std::abs(p.q.norm() - 1.0) > 1e-6) {
    throw ConfigError("pose: quaternion is not unit norm");
  }
  p.q.normalize();
  return p;
}

json intrinsics_to_json(const Intrinsicsd& k) {
  return json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

Intrinsicsd intrinsics_from_json(const json& j) {
  Intrinsicsd k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("intrinsics: ") + e.what());
  }
  return k;
}

namespace {

json vec2_to_json(const Vec2d& v) { return json::array({v.x(), v.y()}); }

Vec2d vec2_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(std::string(what) + ": expected a 2-number array");
  }
  return Vec2d(j[0].get<double>(), j[1].get<double>());
}

}  // namespace

json scene_to_json(const PatchGraph& g) {
  json out;
  out["version"] = kSceneFormatVersion;
  out["intrinsics"] = intrinsics_to_json(g.intrinsics);
  json frames = json::array();
  for (const Frame& f : g.frames) {
    frames.push_back(json{{"index", f.index},
                          {"pose", pose_to_json(f.pose)},
                          {"gt_pose", pose_to_json(f.gt_pose)}});
  }
  out["frames"] = std::move(frames);
  json patches = json::array();
  for (const Patch& p : g.patches) {
    patches.push_back(json{{"k", p.id},
                           {"i", p.source_frame},
                           {"center", vec2_to_json(p.center)},
                           {"depth", p.depth},
                           {"gt_depth", p.gt_depth}});
  }
  out["patches"] = std::move(patches);
  json edges = json::array();
  for (const Edge& e : g.edges) {
    edges.push_back(json{{"k", g.patches[e.patch].id},
                         {"j", e.target_frame},
                         {"target", vec2_to_json(e.target)},
                         {"weight", vec2_to_json(e.weight)},
                         {"gt_target", vec2_to_json(e.gt_target)}});
  }
  out["edges"] = std::move(edges);
  return out;
}

PatchGraph scene_from_json(const json& j) {
  PatchGraph g;
  try {
    if (j.at("version").get<std::string>() != kSceneFormatVersion) {
      throw ConfigError("scene: unsupported version field");
    }
    g.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    for (const json& jf : j.at("frames")) {
      Frame f;
      f.index = jf.at("index").get<int>();
      f.pose = pose_from_json(jf.at("pose"));
      f.gt_pose = pose_from_json(jf.at("gt_pose"));
      g.frames.push_back(f);
    }
    std::unordered_map<int, int> patch_index;  // id -> position
    for (const json& jp : j.at("patches")) {
      Patch p;
      p.id = jp.at("k").get<int>();
      p.source_frame = jp.at("i").get<int>();
      p.center = vec2_from_json(jp.at("center"), "patch center");
      p.depth = jp.at("depth").get<double>();
      p.gt_depth = jp.at("gt_depth").get<double>();
      if (!patch_index.emplace(p.id, static_cast<int>(g.patches.size()))
               .second) {
        throw ConfigError("scene: duplicate patch id");
      }
      g.patches.push_back(p);
    }
    for (const json& je : j.at("edges")) {
      Edge e;
      const int id = je.at("k").get<int>();
      const auto it = patch_index.find(id);
      if (it == patch_index.end()) {
        throw ConfigError("scene: edge references unknown patch id");
      }
      e.patch = it->second;
      e.target_frame = je.at("j").get<int>();
      e.target = vec2_from_json(je.at("target"), "edge target");
      e.weight = vec2_from_json(je.at("weight"), "edge weight");
      e.gt_target = vec2_from_json(je.at("gt_target"), "edge gt_target");
      g.edges.push_back(e);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  validate(g);
  return g;
}

void save_scene(const PatchGraph& g, const std::string& path) {
  write_file_atomic(path, scene_to_json(g).dump(2) + "\n");
}

PatchGraph load_scene(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return scene_from_json(j);
}

void save_trajectory(const std::vector<Posed>& poses,
                     const std::string& path) {
  json arr = json::array();
  for (const Posed& p : poses) arr.push_back(pose_to_json(p));
  write_file_atomic(path, arr.dump(2) + "\n");
}

std::vector<Posed> load_trajectory(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_array()) {
    throw ConfigError(path + ": trajectory must be a JSON array of poses");
  }
  std::vector<Posed> out;
  out.reserve(j.size());
  for (const json& jp : j) out.push_back(pose_from_json(jp));
  return out;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot open for writing: " + tmp);
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw ConfigError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ConfigError("rename failed: " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace bagrad
