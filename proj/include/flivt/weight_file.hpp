#pragma once

#include "flivt/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flivt {

// File/format failures (bad magic, truncation, checksum mismatch, malformed
// tensors). The CLI maps these to exit code 3.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary weight container:
//   "FLVT" | u32 version=1 | u32 tensor_count |
//   per tensor: u32 name_len, name bytes, u8 dtype (0=f32, 1=f64), u8 rank,
//               u32 dims[rank], payload row-major little-endian |
//   u64 FNV-1a checksum over all preceding bytes.
// Tensors are stored sorted by name. One extra f64 tensor, "meta.config",
// carries the variant configuration, form, dtype and build seed so a file is
// self-describing; everything else is a model parameter.
inline constexpr char kWeightMagic[4] = {'F', 'L', 'V', 'T'};
inline constexpr uint32_t kWeightVersion = 1;

std::vector<uint8_t> save_bytes(const ModelGraph& g);
ModelGraph load_bytes(const std::vector<uint8_t>& bytes);

void save_weights(const ModelGraph& g, const std::string& path);
ModelGraph load_weights(const std::string& path);

} // namespace flivt
