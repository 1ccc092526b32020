#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ville/model.hpp"
#include "ville/optimizer.hpp"

namespace ville {

// Single-file checkpoint: magic, version, JSON manifest (tensor table +
// counters + config echo + rng state), raw little-endian payload, CRC32 over
// manifest+payload. Loading validates integrity and shape before touching
// the target model, so a failed load never leaves it half-written.

struct CheckpointMeta {
    int64_t stage = 0;
    int64_t global_step = 0;
    int64_t adapter_rank = 0;       // 0 = merged / none
    double adapter_scale = 1.0;
    std::string rng_state;
    std::string model_config_json;  // echo for provenance / compatibility checks
};

void save_checkpoint(const std::string& path, Model& model, const Optimizer* opt,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    double tau = 0;                                               // runtime temperature at save
    std::map<std::string, std::vector<double>> tensors;           // name -> values
    std::map<std::string, std::vector<int64_t>> shapes;
    std::map<std::string, Optimizer::Slot> opt_state;
    int64_t opt_step = 0;
    bool has_optimizer = false;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copy loaded values into the model (applying adapters first if the
// checkpoint carries them). Shape or coverage mismatch is an integrity error
// and the model is left untouched.
void restore_model(const LoadedCheckpoint& ck, Model& model, Rng& adapter_rng);
void restore_optimizer(const LoadedCheckpoint& ck, Optimizer& opt);

// Config echo carried inside checkpoints, so inference commands can rebuild
// the exact architecture without the original run config.
std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& s);

// Convenience: load + rebuild from the echoed config + restore in one call.
Model load_model(const std::string& ckpt_path, Rng& rng);

}  // namespace ville
