#include "ville/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "ville/io.hpp"

namespace ville {

using nlohmann::json;

namespace {
constexpr uint32_t kMagic = 0x58494C56;  // "VLIX"
constexpr uint32_t kVersion = 1;
}  // namespace

EmbeddingIndex::EmbeddingIndex(int64_t dim) : dim_(dim) {
    if (dim < 1) throw ArgumentError("index: dim must be >= 1");
}

void EmbeddingIndex::add(const std::string& id, const std::vector<double>& vec) {
    if (dim_ == 0) dim_ = static_cast<int64_t>(vec.size());
    if (static_cast<int64_t>(vec.size()) != dim_)
        throw ShapeError("index add: vector dim " + std::to_string(vec.size()) + " != " +
                         std::to_string(dim_));
    for (const std::string& e : ids_)
        if (e == id) throw DataError("index add: duplicate id '" + id + "'");
    double sq = 0;
    for (double v : vec) sq += v * v;
    if (sq < 1e-12) throw DomainError("index add: zero vector for id '" + id + "'");
    double inv = 1.0 / std::sqrt(sq);
    std::vector<double> unit(vec.size());
    for (size_t i = 0; i < vec.size(); ++i) unit[i] = vec[i] * inv;
    ids_.push_back(id);
    vecs_.push_back(std::move(unit));
}

std::vector<std::pair<std::string, double>> EmbeddingIndex::search(
    const std::vector<double>& query, int64_t k) const {
    if (k < 1) throw ArgumentError("index search: k must be >= 1");
    if (ids_.empty()) return {};
    if (static_cast<int64_t>(query.size()) != dim_)
        throw ShapeError("index search: query dim mismatch");
    double sq = 0;
    for (double v : query) sq += v * v;
    if (sq < 1e-12) throw DomainError("index search: zero query");
    double inv = 1.0 / std::sqrt(sq);

    std::vector<std::pair<std::string, double>> out;
    out.reserve(ids_.size());
    for (size_t i = 0; i < ids_.size(); ++i) {
        double dot = 0;
        const auto& v = vecs_[i];
        for (size_t j = 0; j < v.size(); ++j) dot += v[j] * query[j] * inv;
        out.emplace_back(ids_[i], dot);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (k < static_cast<int64_t>(out.size())) out.resize(static_cast<size_t>(k));
    return out;
}

void EmbeddingIndex::save(const std::string& path) const {
    json manifest;
    manifest["dim"] = dim_;
    manifest["count"] = size();
    manifest["ids"] = ids_;
    std::string mstr = manifest.dump();

    std::vector<uint8_t> payload;
    payload.reserve(vecs_.size() * static_cast<size_t>(dim_) * 4);
    for (const auto& v : vecs_)
        for (double x : v) {
            float f = static_cast<float>(x);
            const uint8_t* p = reinterpret_cast<const uint8_t*>(&f);
            payload.insert(payload.end(), p, p + 4);
        }

    BinWriter w(path);
    w.u32(kMagic);
    w.u32(kVersion);
    w.str(mstr);
    w.u64(payload.size());
    w.bytes(payload.data(), payload.size());
    Crc32 crc;
    crc.update(mstr);
    crc.update(payload.data(), payload.size());
    w.u32(crc.value());
    w.commit();
}

EmbeddingIndex EmbeddingIndex::load(const std::string& path) {
    BinReader r(path);
    if (r.u32() != kMagic) throw DataError(path + ": not an index file");
    uint32_t ver = r.u32();
    if (ver != kVersion)
        throw VersionError(path + ": index version " + std::to_string(ver) + " unsupported");
    std::string mstr;
    uint64_t payload_len = 0;
    std::vector<uint8_t> payload;
    uint32_t stored = 0;
    try {
        mstr = r.str();
        payload_len = r.u64();
        if (r.remaining() < payload_len + 4) throw IntegrityError(path + ": truncated payload");
        payload.resize(static_cast<size_t>(payload_len));
        r.bytes(payload.data(), payload.size());
        stored = r.u32();
    } catch (const DataError& e) {
        throw IntegrityError(e.what());  // short reads past a valid header mean a damaged file
    }
    Crc32 crc;
    crc.update(mstr);
    crc.update(payload.data(), payload.size());
    if (crc.value() != stored) throw IntegrityError(path + ": checksum mismatch");

    json manifest;
    try {
        manifest = json::parse(mstr);
    } catch (const json::exception& e) {
        throw DataError(path + ": manifest parse: " + e.what());
    }
    EmbeddingIndex idx;
    idx.dim_ = manifest.at("dim");
    std::vector<std::string> ids = manifest.at("ids").get<std::vector<std::string>>();
    int64_t count = manifest.at("count");
    if (count != static_cast<int64_t>(ids.size()))
        throw IntegrityError(path + ": id count mismatch");
    if (payload.size() != static_cast<size_t>(count) * static_cast<size_t>(idx.dim_) * 4)
        throw IntegrityError(path + ": payload size mismatch");
    const float* p = reinterpret_cast<const float*>(payload.data());
    for (int64_t i = 0; i < count; ++i) {
        std::vector<double> v(static_cast<size_t>(idx.dim_));
        for (int64_t j = 0; j < idx.dim_; ++j) v[static_cast<size_t>(j)] = p[i * idx.dim_ + j];
        idx.ids_.push_back(ids[static_cast<size_t>(i)]);
        idx.vecs_.push_back(std::move(v));
    }
    return idx;
}

}  // namespace ville
