#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace magnet {

// Dense matrix blob: magic "MGF1", rows u32le, dim u32le, reserved u32le,
// then rows*dim little-endian values row-major. Feature files use f32 payload
// and reserved=0; checkpoints reuse the container with reserved as a dtype
// tag (0 = f32, 1 = f64) so double-precision training round-trips exactly.
struct Blob {
    uint32_t rows = 0;
    uint32_t dim = 0;
    uint32_t tag = 0;  // 0 = f32 payload, 1 = f64 payload
    std::vector<float> f32;
    std::vector<double> f64;
};

Blob read_blob(const std::string& path);
void write_blob_f32(const std::string& path, uint32_t rows, uint32_t dim, const float* data);
void write_blob_f64(const std::string& path, uint32_t rows, uint32_t dim, const double* data);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Overwrites atomically enough for our purposes (tmp + rename).
void write_text_file_atomic(const std::string& path, const std::string& content);

}  // namespace magnet
