// Copyright 2026 The coseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace coseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad ids, out-of-range values, bad config).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor or grid dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Filesystem level failure (missing file, unwritable directory).
class IOError : public Error {
 public:
  using Error::Error;
};

/// On-disk content exists but cannot be interpreted.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Statistic undefined for the given input (e.g. zero variance).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(int epoch, const std::string& what)
      : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// An active-learning cycle could not complete; completed cycles remain on disk.
class CycleAbortedError : public Error {
 public:
  CycleAbortedError(int cycle, const std::string& what)
      : Error("cycle " + std::to_string(cycle) + " aborted: " + what), cycle_(cycle) {}
  int cycle() const noexcept { return cycle_; }

 private:
  int cycle_;
};

}  // namespace coseg
