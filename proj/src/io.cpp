#include "magnet/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "magnet/error.hpp"

namespace magnet {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'F', '1'};

uint32_t read_u32le(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

void put_u32le(std::string& out, uint32_t x) {
    out.push_back(char(x & 0xff));
    out.push_back(char((x >> 8) & 0xff));
    out.push_back(char((x >> 16) & 0xff));
    out.push_back(char((x >> 24) & 0xff));
}

}  // namespace

Blob read_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open blob file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16) throw Error(ErrorKind::io, "blob too short: " + path);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(ErrorKind::io, "bad magic in blob file: " + path);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
    Blob b;
    b.rows = read_u32le(p + 4);
    b.dim = read_u32le(p + 8);
    b.tag = read_u32le(p + 12);
    size_t n = size_t(b.rows) * b.dim;
    size_t elem = (b.tag == 1) ? 8 : 4;
    if (b.tag > 1) throw Error(ErrorKind::io, "unknown payload tag in blob file: " + path);
    if (bytes.size() != 16 + n * elem)
        throw Error(ErrorKind::io, "blob payload size mismatch: " + path);
    // Little-endian host assumed (checked in tests); static_assert keeps honest.
    static_assert(sizeof(float) == 4 && sizeof(double) == 8);
    if (b.tag == 1) {
        b.f64.resize(n);
        std::memcpy(b.f64.data(), bytes.data() + 16, n * 8);
    } else {
        b.f32.resize(n);
        std::memcpy(b.f32.data(), bytes.data() + 16, n * 4);
    }
    return b;
}

static void write_blob_raw(const std::string& path, uint32_t rows, uint32_t dim, uint32_t tag,
                           const void* data, size_t elem) {
    std::string out;
    out.reserve(16 + size_t(rows) * dim * elem);
    out.append(kMagic, 4);
    put_u32le(out, rows);
    put_u32le(out, dim);
    put_u32le(out, tag);
    out.append(reinterpret_cast<const char*>(data), size_t(rows) * dim * elem);
    write_text_file_atomic(path, out);
}

void write_blob_f32(const std::string& path, uint32_t rows, uint32_t dim, const float* data) {
    write_blob_raw(path, rows, dim, 0, data, 4);
}

void write_blob_f64(const std::string& path, uint32_t rows, uint32_t dim, const double* data) {
    write_blob_raw(path, rows, dim, 1, data, 8);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write file: " + path);
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw Error(ErrorKind::io, "short write: " + path);
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    write_text_file(tmp, content);
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error(ErrorKind::io, "rename failed: " + path);
}

}  // namespace magnet
