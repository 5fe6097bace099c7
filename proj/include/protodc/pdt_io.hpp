// Copyright 2026 The protodc authors
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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "protodc/tensor.hpp"

namespace protodc {

// Raw tensor file format "PDT1": magic bytes, u8 dtype code (0 = f32),
// u8 ndim, ndim x u32 little-endian extents, then the row-major payload.

inline void write_pdt(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_pdt: cannot open " + path.string());
    f.write("PDT1", 4);
    const uint8_t dtype = 0;
    const uint8_t ndim = static_cast<uint8_t>(t.ndim());
    f.put(static_cast<char>(dtype));
    f.put(static_cast<char>(ndim));
    for (int i = 0; i < t.ndim(); ++i) {
        const uint32_t e = static_cast<uint32_t>(t.extent(i));
        unsigned char b[4] = {static_cast<unsigned char>(e & 0xff),
                              static_cast<unsigned char>((e >> 8) & 0xff),
                              static_cast<unsigned char>((e >> 16) & 0xff),
                              static_cast<unsigned char>((e >> 24) & 0xff)};
        f.write(reinterpret_cast<const char*>(b), 4);
    }
    // Floats are IEEE-754 and the build targets little-endian hosts.
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
    if (!f) throw IoError("write_pdt: short write to " + path.string());
}

inline Tensor read_pdt(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_pdt: cannot open " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PDT1", 4) != 0)
        throw IoError("read_pdt: bad magic in " + path.string());
    const int dtype = f.get();
    const int ndim = f.get();
    if (dtype != 0) throw IoError("read_pdt: unsupported dtype code " + std::to_string(dtype));
    if (ndim < 0 || ndim > 8) throw IoError("read_pdt: implausible ndim in " + path.string());
    Shape shape(static_cast<size_t>(ndim));
    for (int i = 0; i < ndim; ++i) {
        unsigned char b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        shape[static_cast<size_t>(i)] =
            static_cast<int>(b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24));
    }
    const int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 4));
    if (!f) throw IoError("read_pdt: truncated payload in " + path.string());
    return Tensor::from_vector(std::move(shape), std::move(data));
}

}  // namespace protodc
