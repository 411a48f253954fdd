#include "ban/model.hpp"

#include "ban/error.hpp"

namespace ban {

BanModel BanModel::create(const ModelConfig& cfg, uint64_t seed) {
    cfg.vit.validate();
    cfg.bitab.validate();
    BanModel m;
    m.vit = cfg.vit;
    m.encoder = encoder::EncoderParams::random(cfg.vit, cfg.encoder_seed);
    m.bitab_spec = cfg.bitab;
    m.bridge_options = cfg.bridge_options;
    m.aris_enabled = cfg.aris_enabled;
    m.aris_target = cfg.aris_target > 0 ? cfg.aris_target : cfg.vit.pretrain_resolution;

    std::mt19937_64 rng(seed);
    m.bitab = bitab::BiTabParams::create(cfg.bitab, rng);
    if (cfg.bridging_enabled) {
        const int stages = cfg.bitab.num_stages();
        m.taps = cfg.taps.empty() ? encoder::TapSet::evenly_spaced(cfg.vit.depth, stages)
                                  : encoder::TapSet{cfg.taps};
        for (int j = 0; j < stages; ++j) {
            m.bridges.push_back(bridging::BridgeParams::create(cfg.vit.embed_dim, cfg.bitab.stage_channels[j],
                                                               cfg.bridge_init, rng));
        }
    }
    m.validate();
    return m;
}

void BanModel::validate() const {
    vit.validate();
    bitab_spec.validate();
    if (aris_target < 1) throw ConfigError("ARIS target must be positive");
    if (bridges.empty()) return;
    taps.validate(vit.depth);
    const size_t stages = static_cast<size_t>(bitab_spec.num_stages());
    if (taps.indices.size() != stages || bridges.size() != stages) {
        throw ConfigError("tap/stage count mismatch: " + std::to_string(taps.indices.size()) + " taps, " +
                          std::to_string(stages) + " Bi-TAB stages, " + std::to_string(bridges.size()) +
                          " bridges");
    }
    for (size_t j = 0; j < stages; ++j) {
        if (bridges[j].in_channels() != vit.embed_dim || bridges[j].out_channels() != bitab_spec.stage_channels[j]) {
            throw ConfigError("bridge " + std::to_string(j + 1) + " widths do not match encoder/stage channels");
        }
    }
}

ParamList BanModel::frozen() const { return encoder.named(); }

ParamList BanModel::bridge_params() const {
    ParamList out;
    for (size_t j = 0; j < bridges.size(); ++j) bridges[j].append_to(out, "bridges." + std::to_string(j) + ".");
    return out;
}

ParamList BanModel::learnable() const {
    ParamList out = bridge_params();
    ParamList b = bitab.named();
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

ParamList BanModel::head_params() const { return bitab.heads(); }

namespace {

bitab::ChangeLogits run_head(const BanModel& model, const std::vector<StageFeature>& f1,
                             const std::vector<StageFeature>& f2, int64_t h, int64_t w) {
    if (model.bitab_spec.head_kind == bitab::HeadKind::kSemantic) {
        return bitab::scd_heads(f1, f2, model.bitab_spec, model.bitab, h, w);
    }
    return bitab::change_head(f1, f2, model.bitab_spec, model.bitab, h, w);
}

void check_pair(const Tensor& x1, const Tensor& x2) {
    if (x1.rank() != 3) throw ShapeError("expected an HxWxC raster, got " + shape_str(x1.shape()));
    require_same_shape(x1, x2, "bi-temporal pair");
}

}  // namespace

bitab::ChangeLogits ban_forward(const BanModel& model, const Tensor& x1, const Tensor& x2, ForwardTrace* trace) {
    model.validate();
    check_pair(x1, x2);
    const int stages = model.bitab_spec.num_stages();
    std::vector<StageFeature> feats[2];
    const Tensor* inputs[2] = {&x1, &x2};
    for (int i = 0; i < 2; ++i) {
        const Tensor& x = *inputs[i];
        StageFeature cm = bitab::bitab_pre(Var(x), model.bitab_spec, model.bitab);
        if (model.bridges.empty()) {
            for (int j = 1; j <= stages; ++j) {
                cm = bitab::bitab_stage(cm, j, model.bitab_spec, model.bitab);
                feats[i].push_back(cm);
            }
            continue;
        }
        const Tensor fm_input = model.aris_enabled ? encoder::aris_resize(x, model.aris_target) : x;
        encoder::EncoderRun fm(model.vit, model.encoder, fm_input);
        for (int j = 1; j <= stages; ++j) {
            PatchTokens tap = fm.advance_to(model.taps.indices[static_cast<size_t>(j - 1)]);
            cm = bitab::bitab_stage(cm, j, model.bitab_spec, model.bitab);
            bridging::BridgeTrace* bt = nullptr;
            if (trace) {
                trace->phase[i].emplace_back();
                bt = &trace->phase[i].back();
            }
            cm = bridging::bridge_forward(tap, cm, model.bridges[static_cast<size_t>(j - 1)], model.bridge_options,
                                          bt);
            feats[i].push_back(cm);
        }
    }
    return run_head(model, feats[0], feats[1], x1.dim(0), x1.dim(1));
}

bitab::ChangeLogits bitab_forward(const BanModel& model, const Tensor& x1, const Tensor& x2) {
    check_pair(x1, x2);
    auto f1 = bitab::backbone_forward(Var(x1), model.bitab_spec, model.bitab);
    auto f2 = bitab::backbone_forward(Var(x2), model.bitab_spec, model.bitab);
    return run_head(model, f1, f2, x1.dim(0), x1.dim(1));
}

ParamReport count_params(const BanModel& model) {
    ParamReport r;
    const int64_t enc = total_numel(model.frozen());
    const int64_t br = total_numel(model.bridge_params());
    const int64_t backbone = total_numel(model.bitab.backbone());
    const int64_t heads = total_numel(model.bitab.heads());
    r.breakdown = {{"encoder (frozen)", enc}, {"bridges", br}, {"bitab.backbone", backbone}, {"bitab.heads", heads}};
    r.frozen = enc;
    r.learnable = br + backbone + heads;
    return r;
}

}  // namespace ban
