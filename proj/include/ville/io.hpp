#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ville/errors.hpp"

namespace ville {

// Streaming CRC32 (IEEE, zlib-compatible) used as the integrity check for
// corpus files, checkpoints, and indexes.
class Crc32 {
public:
    Crc32();
    void update(const void* data, size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }
    uint32_t value() const { return crc_ ^ 0xFFFFFFFFu; }

private:
    uint32_t crc_ = 0xFFFFFFFFu;
};

uint32_t crc32_of(const void* data, size_t len);

// Binary file writer/reader, little-endian scalars. All multi-byte payloads
// in this project are little-endian.
class BinWriter {
public:
    explicit BinWriter(std::string path);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(const void* data, size_t len);
    void str(const std::string& s);  // u64 length + bytes
    // Writes to <path>.tmp then renames, so readers never see a torn file.
    void commit();
    size_t written() const { return buf_.size(); }
    const std::vector<uint8_t>& buffer() const { return buf_; }

private:
    std::string path_;
    std::vector<uint8_t> buf_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path);
    uint32_t u32();
    uint64_t u64();
    float f32();
    double f64();
    void bytes(void* out, size_t len);
    std::string str();
    size_t remaining() const { return buf_.size() - pos_; }
    size_t pos() const { return pos_; }
    const std::vector<uint8_t>& buffer() const { return buf_; }
    void seek(size_t p);

private:
    std::vector<uint8_t> buf_;
    size_t pos_ = 0;
    std::string path_;
};

void write_text_file_atomic(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
void ensure_dir(const std::string& path);

}  // namespace ville
