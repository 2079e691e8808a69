/*
 * Copyright (c) 2026, the rnnt-sim authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace rnntsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or rank of an operand does not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Operand has the wrong element type.
class DtypeError : public Error {
 public:
  using Error::Error;
};

/// An index (label id, row, duration class) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its documented domain.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Engine asked to do something inconsistent with its current mode.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A graph violates the structural rules for conditional nodes.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// A host synchronization was attempted while capturing a graph.
class CaptureViolationError : public Error {
 public:
  using Error::Error;
};

/// A while node exceeded the configured iteration cap.
class RunawayLoopError : public Error {
 public:
  using Error::Error;
};

/// A host synchronization happened while the sync debug policy forbids it.
class SyncPolicyError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rnntsim
