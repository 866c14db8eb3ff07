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

// Little-endian byte packing shared by the checkpoint and event formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "snnf/error.hpp"

namespace snnf::io {

template <typename T>
void put(std::string& out, T value) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

inline void put_string(std::string& out, std::string_view s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

/// Bounds-checked cursor; running off the end is a CorruptionError.
class Reader {
public:
    Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    template <typename T>
    T get() {
        const auto raw = take(sizeof(T));
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, raw.data(), sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
        T value;
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }

    std::string_view take(std::size_t n) {
        if (n > data_.size() - pos_) {
            throw CorruptionError(what_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                                  std::to_string(pos_) + ", " + std::to_string(data_.size() - pos_) + " left)");
        }
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string get_string() { return std::string(take(get<std::uint32_t>())); }

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    std::string_view data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace snnf::io
