#include "ville/checkpoint.hpp"

#include <algorithm>

#include <json.hpp>

#include "ville/io.hpp"

namespace ville {

using nlohmann::json;

namespace {

constexpr uint32_t kMagic = 0x4B434C56;  // "VLCK"
constexpr uint32_t kVersion = 1;

void append_tensor_payload(std::vector<uint8_t>& payload, const Tensor& t) {
    if (t.dtype() == DType::f32) {
        auto d = t.data_f32();
        const uint8_t* p = reinterpret_cast<const uint8_t*>(d.data());
        payload.insert(payload.end(), p, p + d.size() * 4);
    } else {
        auto d = t.data_f64();
        const uint8_t* p = reinterpret_cast<const uint8_t*>(d.data());
        payload.insert(payload.end(), p, p + d.size() * 8);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, const Optimizer* opt,
                     const CheckpointMeta& meta) {
    json manifest;
    manifest["stage"] = meta.stage;
    manifest["global_step"] = meta.global_step;
    manifest["adapter_rank"] = meta.adapter_rank;
    manifest["adapter_scale"] = meta.adapter_scale;
    manifest["rng_state"] = meta.rng_state;
    manifest["model_config"] = meta.model_config_json;
    manifest["tau"] = model.tau.value();

    std::vector<uint8_t> payload;
    json tensors = json::array();
    auto params = model.parameters();
    for (Parameter* p : params) {
        json t;
        t["name"] = p->name;
        t["dtype"] = dtype_name(p->tensor.dtype());
        t["shape"] = p->tensor.shape();
        t["offset"] = payload.size();
        t["bytes"] = static_cast<size_t>(p->tensor.numel()) * dtype_size(p->tensor.dtype());
        tensors.push_back(std::move(t));
        append_tensor_payload(payload, p->tensor);
    }
    manifest["tensors"] = std::move(tensors);

    if (opt) {
        json os;
        os["step"] = opt->step_count();
        json slots = json::array();
        std::vector<std::string> live;
        for (Parameter* p : params) live.push_back(p->name);
        for (const auto& [name, slot] : opt->state()) {
            // drop slots for parameters that no longer exist (merged adapters)
            if (std::find(live.begin(), live.end(), name) == live.end()) continue;
            json s;
            s["name"] = name;
            s["offset"] = payload.size();
            s["count"] = slot.m.size();
            slots.push_back(std::move(s));
            const uint8_t* pm = reinterpret_cast<const uint8_t*>(slot.m.data());
            payload.insert(payload.end(), pm, pm + slot.m.size() * 8);
            const uint8_t* pv = reinterpret_cast<const uint8_t*>(slot.v.data());
            payload.insert(payload.end(), pv, pv + slot.v.size() * 8);
        }
        os["slots"] = std::move(slots);
        manifest["optimizer"] = std::move(os);
    }

    std::string mstr = manifest.dump();
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

LoadedCheckpoint load_checkpoint(const std::string& path) {
    BinReader r(path);
    if (r.u32() != kMagic) throw DataError(path + ": not a checkpoint file");
    uint32_t ver = r.u32();
    if (ver != kVersion)
        throw VersionError(path + ": checkpoint version " + std::to_string(ver) + " unsupported");
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

    LoadedCheckpoint ck;
    try {
        ck.meta.stage = manifest.at("stage");
        ck.meta.global_step = manifest.at("global_step");
        ck.meta.adapter_rank = manifest.at("adapter_rank");
        ck.meta.adapter_scale = manifest.at("adapter_scale");
        ck.meta.rng_state = manifest.at("rng_state");
        ck.meta.model_config_json = manifest.at("model_config");
        ck.tau = manifest.at("tau");
        for (const auto& t : manifest.at("tensors")) {
            std::string name = t.at("name");
            std::string dt = t.at("dtype");
            std::vector<int64_t> shape = t.at("shape").get<std::vector<int64_t>>();
            size_t offset = t.at("offset");
            size_t bytes = t.at("bytes");
            if (offset + bytes > payload.size())
                throw IntegrityError(path + ": tensor '" + name + "' outside payload");
            int64_t numel = 1;
            for (int64_t d : shape) numel *= d;
            std::vector<double> vals(static_cast<size_t>(numel));
            if (dt == "f32") {
                if (bytes != static_cast<size_t>(numel) * 4)
                    throw IntegrityError(path + ": tensor '" + name + "' size mismatch");
                const float* p = reinterpret_cast<const float*>(payload.data() + offset);
                for (int64_t i = 0; i < numel; ++i) vals[static_cast<size_t>(i)] = p[i];
            } else if (dt == "f64") {
                if (bytes != static_cast<size_t>(numel) * 8)
                    throw IntegrityError(path + ": tensor '" + name + "' size mismatch");
                const double* p = reinterpret_cast<const double*>(payload.data() + offset);
                for (int64_t i = 0; i < numel; ++i) vals[static_cast<size_t>(i)] = p[i];
            } else {
                throw DataError(path + ": tensor '" + name + "' has unknown dtype " + dt);
            }
            ck.tensors[name] = std::move(vals);
            ck.shapes[name] = std::move(shape);
        }
        if (manifest.contains("optimizer")) {
            ck.has_optimizer = true;
            const auto& os = manifest.at("optimizer");
            ck.opt_step = os.at("step");
            for (const auto& s : os.at("slots")) {
                std::string name = s.at("name");
                size_t offset = s.at("offset");
                size_t count = s.at("count");
                if (offset + count * 16 > payload.size())
                    throw IntegrityError(path + ": optimizer slot '" + name + "' outside payload");
                Optimizer::Slot slot;
                slot.m.resize(count);
                slot.v.resize(count);
                const double* p = reinterpret_cast<const double*>(payload.data() + offset);
                for (size_t i = 0; i < count; ++i) slot.m[i] = p[i];
                for (size_t i = 0; i < count; ++i) slot.v[i] = p[count + i];
                ck.opt_state[name] = std::move(slot);
            }
        }
    } catch (const json::exception& e) {
        throw DataError(path + ": manifest: " + e.what());
    }
    return ck;
}

void restore_model(const LoadedCheckpoint& ck, Model& model, Rng& adapter_rng) {
    if (model.backbone.adapters_applied() && ck.meta.adapter_rank == 0)
        throw StateError("restore_model: model has adapters but checkpoint does not");
    if (!model.backbone.adapters_applied() && ck.meta.adapter_rank > 0)
        model.backbone.apply_adapters(ck.meta.adapter_rank, adapter_rng, ck.meta.adapter_scale);
    else if (model.backbone.adapter_rank() != ck.meta.adapter_rank)
        throw StateError("restore_model: adapter rank mismatch");

    auto params = model.parameters();
    // validate fully before mutating anything
    for (Parameter* p : params) {
        auto it = ck.tensors.find(p->name);
        if (it == ck.tensors.end())
            throw IntegrityError("restore_model: checkpoint missing tensor '" + p->name + "'");
        if (ck.shapes.at(p->name) != p->tensor.shape())
            throw IntegrityError("restore_model: shape mismatch for '" + p->name + "': " +
                                 shape_to_string(ck.shapes.at(p->name)) + " vs " +
                                 shape_to_string(p->tensor.shape()));
    }
    if (ck.tensors.size() != params.size())
        throw IntegrityError("restore_model: checkpoint has " + std::to_string(ck.tensors.size()) +
                             " tensors, model has " + std::to_string(params.size()));
    for (Parameter* p : params) {
        const auto& vals = ck.tensors.at(p->name);
        for (int64_t i = 0; i < p->tensor.numel(); ++i)
            p->tensor.set_val(i, vals[static_cast<size_t>(i)]);
    }
    model.tau.set_value(ck.tau);
}

void restore_optimizer(const LoadedCheckpoint& ck, Optimizer& opt) {
    if (!ck.has_optimizer) throw StateError("restore_optimizer: checkpoint has no optimizer state");
    std::map<std::string, Optimizer::Slot> s = ck.opt_state;
    opt.restore_state(std::move(s), ck.opt_step);
}

std::string model_config_json(const ModelConfig& cfg) {
    json j;
    j["backbone"]["d_model"] = cfg.backbone.d_model;
    j["backbone"]["n_layers"] = cfg.backbone.n_layers;
    j["backbone"]["n_heads"] = cfg.backbone.n_heads;
    j["backbone"]["vocab_size"] = cfg.backbone.vocab_size;
    j["backbone"]["d_frame"] = cfg.backbone.d_frame;
    j["backbone"]["max_seq"] = cfg.backbone.max_seq;
    j["backbone"]["dtype"] = dtype_name(cfg.backbone.dtype);
    j["backbone"]["init_std"] = cfg.backbone.init_std;
    j["head"]["variant"] = head_variant_name(cfg.head.variant);
    j["head"]["pooling_tokens"] = cfg.head.pooling_tokens;
    j["head"]["mlp_hidden"] = cfg.head.mlp_hidden;
    j["head"]["d_embed"] = cfg.head.d_embed;
    j["head"]["init_std"] = cfg.head.init_std;
    j["tau"] = cfg.tau;
    j["learnable_tau"] = cfg.learnable_tau;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& s) {
    json j;
    try {
        j = json::parse(s);
    } catch (const json::exception& e) {
        throw DataError(std::string("model config echo: ") + e.what());
    }
    ModelConfig cfg;
    try {
        const auto& b = j.at("backbone");
        cfg.backbone.d_model = b.at("d_model");
        cfg.backbone.n_layers = b.at("n_layers");
        cfg.backbone.n_heads = b.at("n_heads");
        cfg.backbone.vocab_size = b.at("vocab_size");
        cfg.backbone.d_frame = b.at("d_frame");
        cfg.backbone.max_seq = b.at("max_seq");
        cfg.backbone.dtype = std::string(b.at("dtype")) == "f64" ? DType::f64 : DType::f32;
        cfg.backbone.init_std = b.at("init_std");
        const auto& h = j.at("head");
        cfg.head.variant = parse_head_variant(h.at("variant"));
        cfg.head.d_model = cfg.backbone.d_model;
        cfg.head.dtype = cfg.backbone.dtype;
        cfg.head.pooling_tokens = h.at("pooling_tokens");
        cfg.head.mlp_hidden = h.at("mlp_hidden");
        cfg.head.d_embed = h.at("d_embed");
        cfg.head.init_std = h.at("init_std");
        cfg.tau = j.at("tau");
        cfg.learnable_tau = j.at("learnable_tau");
    } catch (const json::exception& e) {
        throw DataError(std::string("model config echo: ") + e.what());
    }
    return cfg;
}

Model load_model(const std::string& ckpt_path, Rng& rng) {
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    Model model(model_config_from_json(ck.meta.model_config_json), rng);
    Rng adapter_rng = rng.fork(0x61646170);
    restore_model(ck, model, adapter_rng);
    return model;
}

}  // namespace ville
