#include "lsast/experiment.hpp"

#include <filesystem>
#include <sstream>

#include "lsast/content.hpp"
#include "lsast/error.hpp"
#include "lsast/image_io.hpp"
#include "lsast/toy_data.hpp"

namespace lsast {

std::vector<Tensor> load_folder(const std::string& dir, int res) {
    const auto n = static_cast<std::size_t>(res);
    std::vector<Tensor> out;
    for (const auto& path : list_images(dir)) out.push_back(to_signed(resize_bilinear(read_image(path), n, n)));
    if (out.empty()) fail(ErrorKind::io, "no PNG or JPEG images in '" + dir + "'");
    return out;
}

namespace {

std::vector<Tensor> signed_all(std::vector<Tensor> images) {
    for (Tensor& t : images) t = to_signed(t);
    return images;
}

}  // namespace

StyleDataset style_dataset(const ExperimentConfig& config, const std::string& toy_style) {
    StyleDataset ds;
    const int res = config.backbone.resolution;
    if (!config.data.style_dir.empty()) ds.images = load_folder(config.data.style_dir, res);
    else
        ds.images = signed_all(
            toy::artworks(toy_style, config.data.style_count, res, derive_seed(config.seed, "data.style")));
    return ds;
}

StyleDataset style_dataset(const ExperimentConfig& config) { return style_dataset(config, config.data.style); }

std::vector<Tensor> content_images(const ExperimentConfig& config) {
    const int res = config.backbone.resolution;
    if (config.data.content_dir.empty())
        return toy::photos(config.data.content_count, res, derive_seed(config.seed, "data.content"));
    std::vector<Tensor> out = load_folder(config.data.content_dir, res);
    for (Tensor& t : out) t = to_unit(t);
    return out;
}

StyleDataset pretrain_dataset(const ExperimentConfig& config) {
    const PretrainSettings& p = config.pretrain;
    const int res = config.backbone.resolution;
    const auto dim = static_cast<std::size_t>(config.prompt_dim);
    StyleDataset ds;
    ds.images = p.photo_dir.empty()
                    ? signed_all(toy::photos(p.photo_count, res, derive_seed(config.seed, "data.pretrain.photos")))
                    : load_folder(p.photo_dir, res);
    ds.captions.assign(ds.images.size(), Tensor({dim}));

    auto add_concept = [&](const std::string& caption, const std::vector<Tensor>& images) {
        const Tensor c = caption_embedding(caption, dim, config.seed);
        for (const Tensor& img : images) {
            ds.images.push_back(img);
            ds.captions.push_back(c);
        }
    };
    for (const std::string& name : p.concepts)
        add_concept(name, signed_all(toy::artworks(name, p.concept_count, res,
                                                   derive_seed(config.seed, "data.pretrain.concepts"))));
    for (const std::string& dir : p.concept_dirs)
        add_concept(std::filesystem::path(dir).lexically_normal().filename().string(), load_folder(dir, res));
    return ds;
}

PretrainResult pretrain(Model& model, const ExperimentConfig& config, const LossSink& backbone_sink,
                        const LossSink& branch_sink) {
    const PretrainSettings& p = config.pretrain;
    const NoiseSchedule schedule = model.schedule();
    PretrainResult out;

    TrainConfig tc = config.train;
    tc.mode = TrainMode::full_finetune;
    tc.lr = p.lr;
    tc.optimizer = p.optimizer;
    tc.total_steps = p.steps;
    tc.decay_step = p.decay_step;
    tc.batch_size = p.batch_size;
    tc.sampling = TimestepSampling::uniform;
    tc.seed = derive_seed(config.seed, "pretrain.backbone");
    out.backbone = train(tc, pretrain_dataset(config), model.seed, model.layout, model.backbone, schedule, nullptr,
                         backbone_sink);

    // The branch learns to reconstruct generic photos from their edges.
    StyleDataset photos;
    const int res = config.backbone.resolution;
    std::vector<Tensor> unit = p.photo_dir.empty()
                                   ? toy::photos(p.photo_count, res, derive_seed(config.seed, "data.pretrain.photos"))
                                   : load_folder(p.photo_dir, res);
    if (!p.photo_dir.empty())
        for (Tensor& t : unit) t = to_unit(t);
    for (const Tensor& img : unit) {
        photos.images.push_back(to_signed(img));
        photos.edges.push_back(canny(to_grayscale(img), config.canny).edges);
    }
    TrainConfig bc = tc;
    bc.mode = TrainMode::content_branch;
    bc.optimizer = OptimizerKind::adam;
    bc.lr = p.branch_lr;
    bc.total_steps = p.branch_steps;
    bc.decay_step = p.branch_steps * 3 / 4;
    bc.seed = derive_seed(config.seed, "pretrain.branch");
    out.branch = train(bc, photos, model.seed, model.layout, model.backbone, schedule, &model.branch, branch_sink);
    return out;
}

TrainResult train_prompts(Model& model, const ExperimentConfig& config, const StyleDataset& dataset,
                          const LossSink& sink) {
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "train");
    return train(tc, dataset, model.seed, model.layout, model.backbone, model.schedule(), nullptr, sink);
}

std::string loss_csv(const std::vector<LossRecord>& losses) {
    std::ostringstream out;
    out.precision(17);
    out << "step,loss,lr\n";
    for (const LossRecord& r : losses) out << r.step << ',' << r.loss << ',' << r.lr << '\n';
    return out.str();
}

}  // namespace lsast
