// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

namespace bagrad {

inline constexpr const char* kVersion = "bagrad 0.1.0";

// Version tag embedded in scene files.
inline constexpr const char* kSceneFormatVersion = "ba-grad/1";

}  // namespace bagrad
