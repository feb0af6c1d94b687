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

#include <stdexcept>
#include <string>
#include <utility>

namespace histo3d {

/// Coarse classification used by the CLI to pick an exit code:
/// Input errors (unreadable or malformed data) exit with 1, Domain errors
/// (well-formed data that violates a rule) exit with 2.
enum class ErrorCategory { Input, Domain };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string& what)
      : std::runtime_error(what), category_(category), kind_(std::move(kind)) {}

  ErrorCategory category() const { return category_; }
  const std::string& kind() const { return kind_; }
  int exit_code() const { return category_ == ErrorCategory::Input ? 1 : 2; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

/// Error that points at an element of a structured document, e.g.
/// `apex.sections.L.ids[1]`.
class PathError : public Error {
 public:
  PathError(ErrorCategory category, std::string kind, std::string path,
            const std::string& message)
      : Error(category, std::move(kind),
              path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

#define HISTO3D_DEFINE_ERROR(Name, Category)                        \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what)                          \
        : Error(ErrorCategory::Category, #Name, what) {}            \
  };

#define HISTO3D_DEFINE_PATH_ERROR(Name, Category)                    \
  class Name : public PathError {                                    \
   public:                                                           \
    Name(std::string path, const std::string& what)                  \
        : PathError(ErrorCategory::Category, #Name, std::move(path), \
                    what) {}                                         \
  };

// Document ingestion.
HISTO3D_DEFINE_PATH_ERROR(SyntaxError, Input)
HISTO3D_DEFINE_PATH_ERROR(SchemaError, Input)
HISTO3D_DEFINE_PATH_ERROR(ValidationError, Domain)
HISTO3D_DEFINE_ERROR(IoError, Input)
HISTO3D_DEFINE_ERROR(ConfigError, Domain)

// Meshes.
HISTO3D_DEFINE_ERROR(FormatError, Input)
HISTO3D_DEFINE_ERROR(EmptyMeshError, Input)
HISTO3D_DEFINE_ERROR(SingularTransformError, Domain)
HISTO3D_DEFINE_ERROR(OpenMeshError, Domain)
HISTO3D_DEFINE_ERROR(ArgumentError, Domain)

// Planar geometry and slicing.
HISTO3D_DEFINE_ERROR(DegenerateError, Domain)
HISTO3D_DEFINE_ERROR(OpenLoopError, Domain)
HISTO3D_DEFINE_ERROR(NoIntersectionError, Domain)
HISTO3D_DEFINE_ERROR(ProtocolMeshMismatchError, Domain)
HISTO3D_DEFINE_ERROR(SelfIntersectionError, Domain)

// Annotations and mapping.
HISTO3D_DEFINE_ERROR(MissingContourError, Domain)
HISTO3D_DEFINE_ERROR(MultipleContourError, Domain)
HISTO3D_DEFINE_ERROR(GeometryError, Domain)
HISTO3D_DEFINE_ERROR(UnknownPolygonError, Domain)
HISTO3D_DEFINE_ERROR(DuplicateAssignmentError, Domain)
HISTO3D_DEFINE_ERROR(UnmappedFileError, Domain)

// Registration and reconstruction.
HISTO3D_DEFINE_ERROR(NonConvergenceError, Domain)
HISTO3D_DEFINE_ERROR(NoCandidateError, Domain)
HISTO3D_DEFINE_ERROR(InsufficientPointsError, Domain)

#undef HISTO3D_DEFINE_ERROR
#undef HISTO3D_DEFINE_PATH_ERROR

}  // namespace histo3d
