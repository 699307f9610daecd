#include "lsast/model.hpp"

#include <algorithm>

#include "lsast/error.hpp"

namespace lsast {

using nlohmann::json;

NoiseSchedule Model::schedule() const { return NoiseSchedule(layout.timesteps, beta_start, beta_end, variance); }

namespace {

Model assemble(const PromptLayout& layout, const BackboneConfig& bc, std::uint64_t master_seed) {
    layout.validate();
    bc.validate();
    Engine backbone_rng = make_engine(master_seed, "init.backbone");
    Engine branch_rng = make_engine(master_seed, "init.branch");
    Engine prompt_rng = make_engine(master_seed, "init.prompt");
    return Model{layout,
                 bc,
                 1e-4,
                 0.02,
                 VarianceKind::posterior,
                 Backbone(bc, backbone_rng),
                 ContentBranch(bc, branch_rng),
                 PromptSeed::init(static_cast<std::size_t>(layout.tokens()), static_cast<std::size_t>(bc.context_dim),
                                  prompt_rng)};
}

std::string variance_name(VarianceKind v) { return v == VarianceKind::beta ? "beta" : "posterior"; }

template <class T>
T field(const json& meta, const char* key) {
    try {
        return meta.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::corrupt_checkpoint, std::string("checkpoint metadata lacks a valid '") + key + "'");
    }
}

}  // namespace

Model make_model(const ExperimentConfig& config, std::uint64_t master_seed) {
    Model m = assemble(config.layout, config.backbone, master_seed);
    m.beta_start = config.beta_start;
    m.beta_end = config.beta_end;
    m.variance = config.variance;
    return m;
}

Model clone_model(const Model& model) {
    Model out = assemble(model.layout, model.backbone_config, 0);
    out.beta_start = model.beta_start;
    out.beta_end = model.beta_end;
    out.variance = model.variance;
    auto copy = [](const NamedParams& from, const NamedParams& to) {
        for (std::size_t i = 0; i < from.size(); ++i) {
            Var dst = to[i].second;
            dst.mutable_value() = from[i].second.value();
        }
    };
    copy(model.seed.named_parameters(), out.seed.named_parameters());
    copy(model.backbone.parameters(), out.backbone.parameters());
    copy(model.branch.parameters(), out.branch.parameters());
    return out;
}

void reset_prompts(Model& model, const PromptLayout& layout, std::uint64_t master_seed) {
    layout.validate();
    Engine prompt_rng = make_engine(master_seed, "init.prompt");
    model.layout = layout;
    model.seed = PromptSeed::init(static_cast<std::size_t>(layout.tokens()),
                                  static_cast<std::size_t>(model.backbone_config.context_dim), prompt_rng);
}

LossSummary summarize(const std::vector<LossRecord>& losses) {
    LossSummary s;
    s.steps = static_cast<int>(losses.size());
    if (losses.empty()) return s;
    const std::size_t w = std::min<std::size_t>(100, losses.size());
    s.first_window = mean_loss(losses, 0, w);
    s.last_window = mean_loss(losses, losses.size() - w, losses.size());
    s.final_loss = losses.back().loss;
    return s;
}

Checkpoint to_checkpoint(const Model& model, const ModelProvenance& prov) {
    Checkpoint ckpt;
    const BackboneConfig& bc = model.backbone_config;
    json meta = {
        {"kind", prov.kind},
        {"S", model.layout.stages},
        {"L", model.layout.layers},
        {"D", bc.context_dim},
        {"T", model.layout.timesteps},
        {"resolution", bc.resolution},
        {"stage_orientation", orientation_name(model.layout.orientation)},
        {"grouping_order", grouping_order_name},
        {"beta_start", model.beta_start},
        {"beta_end", model.beta_end},
        {"variance", variance_name(model.variance)},
        {"backbone",
         {{"image_channels", bc.image_channels},
          {"channels", bc.channels},
          {"res_blocks", bc.res_blocks},
          {"norm_groups", bc.norm_groups},
          {"time_dim", bc.time_dim},
          {"inject_encoder", bc.inject_encoder}}},
        {"rng_seed", prov.seed},
        {"train_config", prov.config_yaml},
        {"rng_state", prov.rng_state},
    };
    if (prov.losses)
        meta["loss_summary"] = {{"steps", prov.losses->steps},
                                {"first_window", prov.losses->first_window},
                                {"last_window", prov.losses->last_window},
                                {"final", prov.losses->final_loss}};
    ckpt.metadata = meta;
    ckpt.store(model.seed.named_parameters());
    ckpt.store(model.backbone.parameters());
    ckpt.store(model.branch.parameters());
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    const json& meta = ckpt.metadata;
    PromptLayout layout;
    layout.stages = field<int>(meta, "S");
    layout.layers = field<int>(meta, "L");
    layout.timesteps = field<int>(meta, "T");
    try {
        layout.orientation = parse_orientation(field<std::string>(meta, "stage_orientation"));
    } catch (const Error& e) {
        fail(ErrorKind::corrupt_checkpoint, std::string("checkpoint metadata: ") + e.what());
    }
    if (field<std::string>(meta, "grouping_order") != grouping_order_name)
        fail(ErrorKind::corrupt_checkpoint, "checkpoint uses an unsupported grouping_order");

    BackboneConfig bc;
    bc.context_dim = field<int>(meta, "D");
    bc.resolution = field<int>(meta, "resolution");
    const json bj = field<json>(meta, "backbone");
    bc.image_channels = field<int>(bj, "image_channels");
    bc.channels = field<std::vector<int>>(bj, "channels");
    bc.res_blocks = field<int>(bj, "res_blocks");
    bc.norm_groups = field<int>(bj, "norm_groups");
    bc.time_dim = field<int>(bj, "time_dim");
    bc.inject_encoder = field<bool>(bj, "inject_encoder");

    Model m = [&] {
        try {
            return assemble(layout, bc, 0);
        } catch (const Error& e) {
            fail(ErrorKind::corrupt_checkpoint, std::string("checkpoint metadata: ") + e.what());
        }
    }();
    m.beta_start = field<double>(meta, "beta_start");
    m.beta_end = field<double>(meta, "beta_end");
    const std::string variance = field<std::string>(meta, "variance");
    if (variance != "posterior" && variance != "beta")
        fail(ErrorKind::corrupt_checkpoint, "checkpoint metadata: unknown variance '" + variance + "'");
    m.variance = variance == "beta" ? VarianceKind::beta : VarianceKind::posterior;
    ckpt.restore(m.seed.named_parameters());
    ckpt.restore(m.backbone.parameters());
    ckpt.restore(m.branch.parameters());
    return m;
}

void save_model(const std::filesystem::path& path, const Model& model, const ModelProvenance& provenance) {
    save_checkpoint(path, to_checkpoint(model, provenance));
}

Model load_model(const std::filesystem::path& path) { return model_from_checkpoint(load_checkpoint(path)); }

}  // namespace lsast
