// Copyright 2026 The histo3d Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "histo3d/annotations.hpp"
#include "histo3d/convex_hull.hpp"
#include "histo3d/error.hpp"
#include "histo3d/geometry.hpp"
#include "histo3d/mesh.hpp"
#include "histo3d/mesh_io.hpp"
#include "histo3d/polygon.hpp"
#include "histo3d/protocol.hpp"
#include "histo3d/reconstruction.hpp"
#include "histo3d/registration.hpp"
#include "histo3d/slicing.hpp"
#include "histo3d/triangulate.hpp"
#include "histo3d/version.hpp"
