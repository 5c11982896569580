// Copyright 2026 The Spikescope Authors
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

#ifndef SPIKESCOPE_ERRORS_H_
#define SPIKESCOPE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace spikescope {

// Invalid architecture, shape or option supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf detected in a forward or backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent saved state, e.g. a backward call that does not match the
// preceding forward call.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Estimator evaluated outside of its domain (too few examples).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content (bad magic, regressing timestamps, ...).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spikescope

#endif  // SPIKESCOPE_ERRORS_H_
