/*
 * Copyright 2026 the koopman-lens authors
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

#ifndef KLENS_ERRORS_HPP
#define KLENS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace klens {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
  using Error::Error;
};

struct NumericalFailure : Error {
  using Error::Error;
};

struct UnstableSystem : Error {
  using Error::Error;
};

struct TrainingDiverged : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct GapError : Error {
  using Error::Error;
};

struct DegenerateData : Error {
  using Error::Error;
};

struct Unsupported : Error {
  using Error::Error;
};

struct SynthesisInfeasible : Error {
  using Error::Error;
};

struct CertificateRejected : Error {
  using Error::Error;
};

struct ReductionEmpty : Error {
  using Error::Error;
};

}  // namespace klens

#endif  // KLENS_ERRORS_HPP
