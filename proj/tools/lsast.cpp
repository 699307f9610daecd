// Command-line driver: pretraining, prompt training, stylization, edge
// extraction, FID evaluation and ablations.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "lsast/config.hpp"
#include "lsast/content.hpp"
#include "lsast/error.hpp"
#include "lsast/evaluation.hpp"
#include "lsast/experiment.hpp"
#include "lsast/image_io.hpp"
#include "lsast/model.hpp"
#include "lsast/pipeline.hpp"
#include "lsast/toy_data.hpp"

namespace fs = std::filesystem;
using namespace lsast;

namespace {

struct Common {
    std::string config;
    std::optional<long long> seed;
    std::string out;
    bool deterministic = false;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
    cmd->add_option("--config", c.config, "YAML experiment config");
    cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
    auto* out = cmd->add_option("--out", c.out, "output path");
    if (out_required) out->required();
    cmd->add_flag("--deterministic", c.deterministic, "request bit-reproducible output");
    cmd->add_option("--set", c.overrides, "config override key=value (repeatable)");
}

ConfigValues values_for(const Common& c) {
    std::vector<std::string> overrides = c.overrides;
    if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
    if (c.deterministic) overrides.push_back("deterministic=true");
    return load_config_values(c.config, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
}

// Streams "step,loss,lr" rows as training progresses.
class CsvSink {
public:
    explicit CsvSink(const fs::path& path) : out_(path, std::ios::trunc) {
        if (!out_) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
        out_.precision(17);
        out_ << "step,loss,lr\n";
    }
    LossSink sink() {
        return [this](const LossRecord& r) { out_ << r.step << ',' << r.loss << ',' << r.lr << '\n' << std::flush; };
    }

private:
    std::ofstream out_;
};

fs::path prepare_dir(const std::string& out) {
    const fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory '" + out + "': " + ec.message());
    return dir;
}

void check_compatible(const ExperimentConfig& config, const Model& model, const std::string& ckpt) {
    auto mismatch = [&](const std::string& key, long long want, long long have) {
        if (want != have)
            fail(ErrorKind::config, key + " is " + std::to_string(want) + " but checkpoint '" + ckpt + "' has " +
                                        std::to_string(have));
    };
    mismatch("backbone.resolution", config.backbone.resolution, model.backbone_config.resolution);
    mismatch("prompt.dim", config.prompt_dim, model.backbone_config.context_dim);
    mismatch("diffusion.timesteps", config.layout.timesteps, model.layout.timesteps);
}

int cmd_pretrain(const Common& c) {
    const ConfigValues values = values_for(c);
    const ExperimentConfig config = resolve_config(values);
    const fs::path dir = prepare_dir(c.out);
    write_text(dir / "config.yaml", echo_config(values));
    Model model = make_model(config, config.seed);
    CsvSink backbone_log(dir / "backbone_loss.csv"), branch_log(dir / "branch_loss.csv");
    const PretrainResult r = pretrain(model, config, backbone_log.sink(), branch_log.sink());
    ModelProvenance prov{"backbone", echo_config(values), config.seed, summarize(r.backbone.losses),
                         r.backbone.rng_state};
    save_model(dir / "backbone.ckpt", model, prov);
    std::cerr << "wrote " << (dir / "backbone.ckpt").string() << "\n";
    return 0;
}

int cmd_train_prompts(const Common& c, const std::string& backbone, const std::string& style_dir) {
    ConfigValues values = values_for(c);
    if (!style_dir.empty()) values["data.style_dir"] = style_dir;
    const ExperimentConfig config = resolve_config(values);
    Model model = load_model(backbone);
    check_compatible(config, model, backbone);
    reset_prompts(model, config.layout, config.seed);

    const fs::path dir = prepare_dir(c.out);
    write_text(dir / "config.yaml", echo_config(values));
    const StyleDataset dataset = style_dataset(config);
    CsvSink log(dir / "loss.csv");
    const TrainResult r = train_prompts(model, config, dataset, log.sink());
    ModelProvenance prov{"prompts", echo_config(values), config.seed, summarize(r.losses), r.rng_state};
    save_model(dir / "prompts.ckpt", model, prov);
    std::cerr << "wrote " << (dir / "prompts.ckpt").string() << "\n";
    return 0;
}

struct StylizeFlags {
    std::string checkpoint, content;
    std::optional<double> strength, content_strength;
    int resolution = 0;
};

int cmd_stylize(const Common& c, const StylizeFlags& f) {
    ConfigValues values = values_for(c);
    const ExperimentConfig config = resolve_config(values);
    StylizeRequest req;
    req.checkpoint = f.checkpoint;
    req.content = f.content;
    req.output = c.out;
    req.strength = f.strength.value_or(config.stylize_strength);
    req.content_strength = f.content_strength.value_or(config.content_strength);
    req.seed = config.seed;
    req.resolution = f.resolution;
    req.canny = config.canny;
    req.validate();
    values["stylize.strength"] = std::to_string(req.strength);
    values["content.strength"] = std::to_string(req.content_strength);
    stylize(req);
    fs::path echo = req.output;
    echo.replace_extension(".config.yaml");
    write_text(echo, echo_config(values));
    std::cerr << "wrote " << req.output.string() << "\n";
    return 0;
}

int cmd_extract_edges(const Common& c, const std::string& image, std::optional<double> low, std::optional<double> high,
                      std::optional<double> sigma, bool absolute) {
    const ExperimentConfig config = resolve_config(values_for(c));
    CannyOptions opt = config.canny;
    if (low) opt.low = *low;
    if (high) opt.high = *high;
    if (sigma) opt.sigma = *sigma;
    if (absolute) opt.mode = ThresholdMode::absolute;
    if (!(opt.low >= 0.0 && opt.low < opt.high)) fail(ErrorKind::config, "low/high: invalid thresholds");
    if (!(opt.sigma > 0.0)) fail(ErrorKind::config, "sigma must be positive");
    const EdgeMap edges = canny(to_grayscale(read_image(image)), opt);
    write_png(c.out, edges.edges);
    std::cerr << "wrote " << c.out << " (" << edges.count() << " edge pixels, low " << edges.low << ", high "
              << edges.high << ")\n";
    return 0;
}

int cmd_eval_fid(const Common& c, const std::string& a, const std::string& b, std::optional<long long> xseed) {
    const ExperimentConfig config = resolve_config(values_for(c));
    const std::uint64_t seed = xseed ? static_cast<std::uint64_t>(*xseed) : config.eval.extractor_seed;
    const FeatureExtractor extractor(seed, config.eval.feature_dim);
    auto load = [](const std::string& dir) {
        std::vector<Tensor> images;
        for (const auto& p : list_images(dir)) images.push_back(read_image(p));
        if (images.size() < 2) fail(ErrorKind::io, "'" + dir + "' needs at least two images");
        return images;
    };
    const double score = fid(extractor.extract(load(a)), extractor.extract(load(b)));
    std::cout.precision(10);
    std::cout << "fid " << score << "\n";
    if (!c.out.empty()) {
        std::ostringstream s;
        s.precision(17);
        s << "extractor: " << extractor.id() << "\nfid: " << score << "\n";
        write_text(c.out, s.str());
    }
    return 0;
}

int cmd_ablate(const Common& c, const std::string& backbone) {
    const ConfigValues values = values_for(c);
    const ExperimentConfig config = resolve_config(values);
    const fs::path dir = prepare_dir(c.out);
    write_text(dir / "config.yaml", echo_config(values));
    Model base = [&] {
        if (!backbone.empty()) {
            Model m = load_model(backbone);
            check_compatible(config, m, backbone);
            return m;
        }
        Model m = make_model(config, config.seed);
        pretrain(m, config);
        return m;
    }();
    const AblationReport report = run_ablations(config, base, [](const std::string& style, AblationVariant v) {
        std::cerr << "[ablate] " << style << " / " << variant_name(v) << "\n";
    });
    write_text(dir / "report.csv", report_csv(report));
    write_text(dir / "report.txt", report_table(report));
    std::cout << report_table(report);
    return report.complete ? 0 : 1;
}

int cmd_synth(const Common& c, const std::string& kind, int count, int res) {
    const ExperimentConfig config = resolve_config(values_for(c));
    if (count < 1) fail(ErrorKind::config, "count must be positive");
    if (res < 4) fail(ErrorKind::config, "resolution must be at least 4");
    const fs::path dir = prepare_dir(c.out);
    const std::vector<Tensor> images = kind == "photos" ? toy::photos(count, res, derive_seed(config.seed, "synth"))
                                                        : toy::artworks(kind, count, res, derive_seed(config.seed, "synth"));
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.png", i);
        write_png(dir / name, images[i]);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Step- and layer-aware prompt space training and stylization"};
    app.require_subcommand(1);

    Common common;
    auto* pre = app.add_subcommand("pretrain-backbone", "pretrain the toy backbone and content branch");
    add_common(pre, common);

    std::string backbone, style_dir;
    auto* tp = app.add_subcommand("train-prompts", "learn the prompt space for one style collection");
    add_common(tp, common);
    tp->add_option("--backbone", backbone, "backbone checkpoint")->required();
    tp->add_option("--style-dir", style_dir, "folder of style images (overrides data.style_dir)");

    StylizeFlags sf;
    auto* st = app.add_subcommand("stylize", "stylize one content image");
    add_common(st, common);
    st->add_option("--checkpoint", sf.checkpoint, "trained prompts checkpoint")->required();
    st->add_option("--content", sf.content, "content image (PNG or JPEG)")->required();
    st->add_option("--strength", sf.strength, "tau in [0, 1]");
    st->add_option("--content-strength", sf.content_strength, "content residual scale");
    st->add_option("--resolution", sf.resolution, "output side length (default: checkpoint resolution)");

    std::string image;
    std::optional<double> low, high, sigma;
    bool absolute = false;
    auto* ee = app.add_subcommand("extract-edges", "write the Canny edge map of an image");
    add_common(ee, common);
    ee->add_option("--image", image, "input image")->required();
    ee->add_option("--low", low, "low threshold");
    ee->add_option("--high", high, "high threshold");
    ee->add_option("--sigma", sigma, "blur std");
    ee->add_flag("--absolute", absolute, "thresholds are absolute magnitudes, not fractions of the maximum");

    std::string dir_a, dir_b;
    std::optional<long long> xseed;
    auto* ef = app.add_subcommand("eval-fid", "FID between two image folders");
    add_common(ef, common, false);
    ef->add_option("a", dir_a, "first folder")->required();
    ef->add_option("b", dir_b, "second folder")->required();
    ef->add_option("--extractor-seed", xseed, "feature extractor seed");

    std::string ablate_backbone;
    auto* ab = app.add_subcommand("ablate", "train and score the five ablation variants");
    add_common(ab, common);
    ab->add_option("--backbone", ablate_backbone, "pretrained backbone checkpoint (default: pretrain first)");

    std::string kind = "photos";
    int count = 8, res = 64;
    auto* sy = app.add_subcommand("synth-data", "write a procedural image set");
    add_common(sy, common);
    sy->add_option("--kind", kind, "photos, swirl, woodblock or stipple");
    sy->add_option("--count", count, "number of images");
    sy->add_option("--resolution", res, "side length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_code(ErrorKind::config);
    }

    try {
        Eigen::setNbThreads(1);
        if (*pre) return cmd_pretrain(common);
        if (*tp) return cmd_train_prompts(common, backbone, style_dir);
        if (*st) return cmd_stylize(common, sf);
        if (*ee) return cmd_extract_edges(common, image, low, high, sigma, absolute);
        if (*ef) return cmd_eval_fid(common, dir_a, dir_b, xseed);
        if (*ab) return cmd_ablate(common, ablate_backbone);
        if (*sy) return cmd_synth(common, kind, count, res);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(ErrorKind::io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
