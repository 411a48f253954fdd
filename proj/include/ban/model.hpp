#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ban/bitab.hpp"
#include "ban/bridging.hpp"
#include "ban/encoder.hpp"

// Bi-temporal adapter network: frozen encoder + bridging modules + Bi-TAB.
namespace ban {

struct ModelConfig {
    encoder::ViTConfig vit;
    std::vector<int> taps;  // empty -> evenly spaced, one per Bi-TAB stage
    bitab::BiTabSpec bitab;
    bool bridging_enabled = true;
    bridging::BridgeInit bridge_init = bridging::BridgeInit::kSmallUniform;
    bridging::BridgeOptions bridge_options;
    bool aris_enabled = true;
    int64_t aris_target = 0;  // 0 -> encoder pretrain resolution
    uint64_t encoder_seed = 0;
};

class BanModel {
public:
    encoder::ViTConfig vit;
    encoder::EncoderParams encoder;
    encoder::TapSet taps;
    std::vector<bridging::BridgeParams> bridges;  // empty when bridging is disabled
    bridging::BridgeOptions bridge_options;
    bitab::BiTabSpec bitab_spec;
    bitab::BiTabParams bitab;
    bool aris_enabled = true;
    int64_t aris_target = 0;

    // Random encoder from cfg.encoder_seed, trainable parts from `seed`.
    static BanModel create(const ModelConfig& cfg, uint64_t seed);

    // Throws ConfigError when taps, stages and bridges disagree.
    void validate() const;

    ParamList frozen() const;
    ParamList learnable() const;
    // Learnable parameters of the prediction head(s).
    ParamList head_params() const;
    ParamList bridge_params() const;
};

struct ForwardTrace {
    std::vector<bridging::BridgeTrace> phase[2];
};

// Full forward for one bi-temporal pair of H x W x C rasters. Per phase:
// ARIS resize -> patchify -> position embedding, then for j = 1..J run the
// encoder up to tap j, Bi-TAB stage j, and bridge j; finally the head.
bitab::ChangeLogits ban_forward(const BanModel& model, const Tensor& x1, const Tensor& x2,
                                ForwardTrace* trace = nullptr);

// The Bi-TAB alone on the same inputs (no encoder, no bridges).
bitab::ChangeLogits bitab_forward(const BanModel& model, const Tensor& x1, const Tensor& x2);

struct ParamReport {
    int64_t learnable = 0;
    int64_t frozen = 0;
    std::vector<std::pair<std::string, int64_t>> breakdown;
};

ParamReport count_params(const BanModel& model);

}  // namespace ban
