/*
 * Copyright 2026 The SNNF Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
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

namespace snnf {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not compose.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Violated API precondition (non-scalar loss, bad parameter range, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Network spec whose layers do not chain.
class CompositionError : public Error {
public:
    using Error::Error;
};

/// Unknown layer or parameter name.
class NameError : public Error {
public:
    using Error::Error;
};

/// Bad magic, version or schema in a file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// File ends early or contains inconsistent lengths.
class CorruptionError : public Error {
public:
    using Error::Error;
};

class TransplantError : public Error {
public:
    using Error::Error;
};

class ManifestError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};
/// A file could not be opened, read or written.
class FilesystemError : public Error {
public:
    using Error::Error;
};


/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int last_finite_epoch)
        : Error(what), last_finite_epoch_(last_finite_epoch) {}

    int last_finite_epoch() const noexcept { return last_finite_epoch_; }

private:
    int last_finite_epoch_;
};

}  // namespace snnf
