#pragma once

#include "ville/losses.hpp"

namespace ville {

struct ModelConfig {
    BackboneConfig backbone;
    HeadConfig head;
    double tau = 0.07;
    bool learnable_tau = false;

    void validate() const {
        backbone.validate();
        head.validate();
        if (head.d_model != backbone.d_model)
            throw ConfigError("model: head d_model != backbone d_model");
        if (head.dtype != backbone.dtype) throw ConfigError("model: head/backbone dtype mismatch");
    }
};

// The trainable unit: backbone + embedding head + temperature.
struct Model {
    ModelConfig cfg;
    Backbone backbone;
    EmbedHead head;
    Temperature tau;

    Model(const ModelConfig& c, Rng& rng)
        : cfg(c), backbone((c.validate(), c.backbone), rng), head(c.head, rng),
          tau(c.tau, c.learnable_tau, c.backbone.dtype) {}

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps = backbone.parameters();
        for (Parameter* p : head.parameters()) ps.push_back(p);
        if (Parameter* lt = tau.param()) ps.push_back(lt);
        return ps;
    }

    // freeze/unfreeze the base weights; adapters, the frame projection, and
    // the embedding head always stay trainable
    void set_base_trainable(bool trainable) {
        for (Parameter* p : backbone.parameters()) {
            bool keep = p->name.find(".lora_") != std::string::npos ||
                        p->name.rfind("frame_proj.", 0) == 0;
            if (!keep) p->tensor.impl().requires_grad = trainable;
        }
    }
};

}  // namespace ville
