// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Scene file format (version "ba-grad/1"):
//   {
//     "version": "ba-grad/1",
//     "intrinsics": {"fx":…, "fy":…, "cx":…, "cy":…},
//     "frames":  [{"index":0, "pose":[qw,qx,qy,qz,tx,ty,tz], "gt_pose":[…]}],
//     "patches": [{"k":0, "i":0, "center":[u,v], "depth":d, "gt_depth":d}],
//     "edges":   [{"k":0, "j":1, "target":[u,v], "weight":[wu,wv],
//                  "gt_target":[u,v]}]
//   }
// Trajectories are bare JSON arrays of 7-number pose arrays.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bagrad/scene.hpp"

namespace bagrad {

nlohmann::json pose_to_json(const Posed& p);
Posed pose_from_json(const nlohmann::json& j);

nlohmann::json intrinsics_to_json(const Intrinsicsd& k);
Intrinsicsd intrinsics_from_json(const nlohmann::json& j);

nlohmann::json scene_to_json(const PatchGraph& g);
PatchGraph scene_from_json(const nlohmann::json& j);

void save_scene(const PatchGraph& g, const std::string& path);
PatchGraph load_scene(const std::string& path);

void save_trajectory(const std::vector<Posed>& poses, const std::string& path);
std::vector<Posed> load_trajectory(const std::string& path);

// Shared file helpers (atomic write via rename).
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace bagrad
