#include "ville/io.hpp"

#include <cstring>
#include <fstream>

namespace ville {

namespace {

const uint32_t* crc_table() {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    return table;
}

}  // namespace

Crc32::Crc32() { crc_table(); }

void Crc32::update(const void* data, size_t len) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    const uint32_t* t = crc_table();
    for (size_t i = 0; i < len; ++i) crc_ = t[(crc_ ^ p[i]) & 0xFF] ^ (crc_ >> 8);
}

uint32_t crc32_of(const void* data, size_t len) {
    Crc32 c;
    c.update(data, len);
    return c.value();
}

BinWriter::BinWriter(std::string path) : path_(std::move(path)) {}

void BinWriter::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void BinWriter::u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void BinWriter::f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}
void BinWriter::f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
}
void BinWriter::bytes(const void* data, size_t len) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + len);
}
void BinWriter::str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
}

void BinWriter::commit() {
    std::string tmp = path_ + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!f) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) throw IoError("rename " + tmp + " -> " + path_ + ": " + ec.message());
}

BinReader::BinReader(const std::string& path) : path_(path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open " + path);
    auto size = f.tellg();
    f.seekg(0);
    buf_.resize(static_cast<size_t>(size));
    f.read(reinterpret_cast<char*>(buf_.data()), size);
    if (!f) throw IoError("short read from " + path);
}

uint32_t BinReader::u32() {
    if (remaining() < 4) throw DataError(path_ + ": truncated (u32)");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
}
uint64_t BinReader::u64() {
    if (remaining() < 8) throw DataError(path_ + ": truncated (u64)");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
}
float BinReader::f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}
double BinReader::f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}
void BinReader::bytes(void* out, size_t len) {
    if (remaining() < len) throw DataError(path_ + ": truncated (bytes)");
    std::memcpy(out, buf_.data() + pos_, len);
    pos_ += len;
}
std::string BinReader::str() {
    uint64_t len = u64();
    if (remaining() < len) throw DataError(path_ + ": truncated (str)");
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), static_cast<size_t>(len));
    pos_ += static_cast<size_t>(len);
    return s;
}
void BinReader::seek(size_t p) {
    if (p > buf_.size()) throw DataError(path_ + ": seek past end");
    pos_ = p;
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
    BinWriter w(path);
    w.bytes(content.data(), content.size());
    w.commit();
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("mkdir " + path + ": " + ec.message());
}

}  // namespace ville
