#include "lsast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "lsast/error.hpp"
#include "lsast/experiment.hpp"
#include "lsast/image_io.hpp"
#include "lsast/ops.hpp"
#include "lsast/pipeline.hpp"

namespace lsast {

FeatureExtractor::FeatureExtractor(std::uint64_t seed, int dim, int input_resolution)
    : dim_(dim), resolution_(input_resolution) {
    require(dim >= 1, "feature extractor: dim must be positive");
    require(input_resolution >= 8, "feature extractor: input resolution too small");
    Engine rng = make_engine(seed, "feature_extractor");
    const std::array<std::size_t, 4> widths{3, 16, 32, static_cast<std::size_t>(dim)};
    std::uint64_t hash = 1469598103934665603ULL;
    for (std::size_t i = 0; i < 3; ++i) {
        const double std = std::sqrt(2.0 / static_cast<double>(widths[i] * 9));
        weights_[i] = Var::constant(randn({widths[i + 1], widths[i], 3, 3}, rng, std));
        biases_[i] = Var::constant(randn({widths[i + 1]}, rng, 0.1));
        for (const Var* v : {&weights_[i], &biases_[i]})
            for (double x : v->value().data()) {
                unsigned char bytes[sizeof x];
                std::memcpy(bytes, &x, sizeof x);
                for (unsigned char b : bytes) hash = (hash ^ b) * 1099511628211ULL;
            }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    id_ = "randconv-v1-d" + std::to_string(dim) + "-seed" + std::to_string(seed) + "-" + buf;
}

FeatureSet FeatureExtractor::extract(const std::vector<Tensor>& images) const {
    NoGradGuard no_grad;
    FeatureSet out;
    out.extractor_id = id_;
    out.features.resize(static_cast<Eigen::Index>(images.size()), dim_);
    const auto res = static_cast<std::size_t>(resolution_);
    for (std::size_t i = 0; i < images.size(); ++i) {
        require(images[i].rank() == 3 && images[i].dim(0) == 3, "extract_features: image " + std::to_string(i) +
                                                                   " must be (3, H, W), got " +
                                                                   shape_str(images[i].shape()));
        Tensor x = to_signed(resize_bilinear(images[i], res, res)).reshaped({1, 3, res, res});
        Var h = Var::constant(std::move(x));
        for (std::size_t l = 0; l < 3; ++l) h = ops::silu(ops::conv2d(h, weights_[l], biases_[l], 2, 1));
        const Tensor& v = h.value();
        const std::size_t plane = v.dim(2) * v.dim(3);
        for (int c = 0; c < dim_; ++c) {
            double s = 0.0;
            for (std::size_t p = 0; p < plane; ++p) s += v[static_cast<std::size_t>(c) * plane + p];
            out.features(static_cast<Eigen::Index>(i), c) = s / static_cast<double>(plane);
        }
    }
    return out;
}

namespace {

void moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    const Eigen::Index n = x.rows(), d = x.cols();
    mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    if (n <= d) cov += 1e-6 * Eigen::MatrixXd::Identity(d, d);
}

Eigen::VectorXd checked_eigenvalues(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es) {
    if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "fid: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-6) fail(ErrorKind::numerical, "fid: covariance is not positive semi-definite");
        ev(i) = std::max(ev(i), 0.0);
    }
    return ev;
}

}  // namespace

double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    require(a.cols() == b.cols(), "fid: feature dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                      std::to_string(b.cols()) + ")");
    require(a.rows() >= 2 && b.rows() >= 2, "fid: each feature set needs at least two samples");
    require(a.allFinite() && b.allFinite(), "fid: non-finite features");
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(a, mu_a, cov_a);
    moments(b, mu_b, cov_b);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
    const Eigen::VectorXd ev_a = checked_eigenvalues(es_a);
    const Eigen::MatrixXd sqrt_a = es_a.eigenvectors() * ev_a.cwiseSqrt().asDiagonal() * es_a.eigenvectors().transpose();
    Eigen::MatrixXd m = sqrt_a * cov_b * sqrt_a;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(m, Eigen::EigenvaluesOnly);
    const double tr_sqrt = checked_eigenvalues(es_m).cwiseSqrt().sum();

    const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return std::max(value, 0.0);
}

double fid(const FeatureSet& a, const FeatureSet& b) {
    require(a.extractor_id == b.extractor_id, "fid: feature sets come from different extractors");
    return fid(a.features, b.features);
}

const std::array<AblationVariant, 5>& all_variants() {
    static const std::array<AblationVariant, 5> v{AblationVariant::full, AblationVariant::no_content,
                                                  AblationVariant::no_step_and_layer, AblationVariant::no_step,
                                                  AblationVariant::no_layer};
    return v;
}

std::string variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::full: return "full";
        case AblationVariant::no_content: return "no_content";
        case AblationVariant::no_step_and_layer: return "no_step_and_layer";
        case AblationVariant::no_step: return "no_step";
        case AblationVariant::no_layer: return "no_layer";
    }
    return "?";
}

PromptLayout variant_layout(AblationVariant v, const PromptLayout& base) {
    PromptLayout out = base;
    if (v == AblationVariant::no_step || v == AblationVariant::no_step_and_layer) out.stages = 1;
    if (v == AblationVariant::no_layer || v == AblationVariant::no_step_and_layer) out.layers = 1;
    return out;
}

double variant_content_strength(AblationVariant v, double base) { return v == AblationVariant::no_content ? 0.0 : base; }

AblationReport run_ablations(const ExperimentConfig& config, const Model& base, const AblationProgress& progress) {
    AblationReport report;
    const FeatureExtractor extractor(config.eval.extractor_seed, config.eval.feature_dim);
    report.extractor_id = extractor.id();
    report.notes = {
        "FID uses a fixed random-convolution extractor; scores compare variants of this run only.",
        "no_step_and_layer is a single global prompt shared by every stage and band.",
        "no_content reuses the prompts trained for full and stylizes with content strength 0.",
        "ref(vangogh) is the full-scale Inception FID for a Van Gogh style; not comparable to the desk columns.",
    };

    ExperimentConfig run = config;
    run.train.total_steps = config.ablate.steps;
    // Keep the decay point at the same fraction of training.
    run.train.decay_step = static_cast<int>(std::lround(static_cast<double>(config.ablate.steps) *
                                                        config.train.decay_step / config.train.total_steps));
    if (run.train.total_steps > 0 && run.train.decay_step >= run.train.total_steps)
        run.train.decay_step = run.train.total_steps - 1;

    const std::vector<Tensor> contents = content_images(config);
    std::vector<Tensor> batch;
    for (int i = 0; i < config.ablate.samples; ++i) batch.push_back(contents[static_cast<std::size_t>(i) % contents.size()]);

    std::vector<std::string> styles = config.ablate.styles;
    if (!config.data.style_dir.empty())
        styles = {std::filesystem::path(config.data.style_dir).lexically_normal().filename().string()};

    report.complete = true;
    for (const std::string& style : styles) {
        const StyleDataset dataset = style_dataset(config, style);
        std::vector<Tensor> style_unit;
        for (const Tensor& t : dataset.images) style_unit.push_back(to_unit(t));
        const FeatureSet style_features = extractor.extract(style_unit);

        PromptSeed full_seed;
        double full_loss = 0.0;
        for (AblationVariant v : all_variants()) {
            if (progress) progress(style, v);
            AblationRow row;
            row.style = style;
            row.variant = v;
            try {
                const PromptLayout layout = variant_layout(v, config.layout);
                row.stages = layout.stages;
                row.layers = layout.layers;
                row.prompt_cells = static_cast<std::size_t>(layout.tokens());
                row.seed_parameters = static_cast<std::size_t>(config.prompt_dim) + 6 * row.prompt_cells;

                Model model = clone_model(base);
                reset_prompts(model, layout, config.seed);

                if (v == AblationVariant::no_content && full_seed.prompt.defined()) {
                    model.seed = full_seed;
                    row.final_loss = full_loss;
                } else {
                    const TrainResult r = train_prompts(model, run, dataset);
                    row.final_loss = r.losses.empty() ? 0.0 : summarize(r.losses).last_window;
                    if (v == AblationVariant::full) {
                        full_seed = model.seed;
                        full_loss = row.final_loss;
                    }
                }
                const Tensor out = stylize_batch(model, batch, config.stylize_strength,
                                                 variant_content_strength(v, config.content_strength), config.canny,
                                                 derive_seed(config.seed, "ablate.stylize"));
                const auto res = static_cast<std::size_t>(config.backbone.resolution);
                std::vector<Tensor> images;
                for (std::size_t i = 0; i < out.dim(0); ++i) {
                    Tensor img({3, res, res});
                    std::copy_n(out.ptr() + i * img.size(), img.size(), img.ptr());
                    images.push_back(to_unit(img));
                }
                row.fid = fid(extractor.extract(images), style_features);
                row.ok = true;
            } catch (const Error& e) {
                row.error = e.what();
                report.complete = false;
            }
            report.rows.push_back(row);
        }
    }
    return report;
}

std::string report_csv(const AblationReport& report) {
    std::ostringstream out;
    out.precision(10);
    out << "style,variant,stages,layers,prompt_cells,seed_parameters,final_loss,fid,status\n";
    for (const AblationRow& r : report.rows)
        out << r.style << ',' << variant_name(r.variant) << ',' << r.stages << ',' << r.layers << ',' << r.prompt_cells
            << ',' << r.seed_parameters << ',' << r.final_loss << ',' << r.fid << ',' << (r.ok ? "ok" : "failed") << '\n';
    return out.str();
}

namespace {

// Full-scale Inception FID, Van Gogh style, for orientation only.
double reference_fid(AblationVariant v) {
    switch (v) {
        case AblationVariant::full: return 94.17;
        case AblationVariant::no_content: return 95.05;
        case AblationVariant::no_step_and_layer: return 96.33;
        case AblationVariant::no_step: return 94.46;
        case AblationVariant::no_layer: return 94.58;
    }
    return 0.0;
}

}  // namespace

std::string report_table(const AblationReport& report) {
    std::ostringstream out;
    out << "Ablation report" << (report.complete ? "" : " (INCOMPLETE)") << "\n";
    out << "extractor: " << report.extractor_id << "\n";
    for (const std::string& n : report.notes) out << "note: " << n << "\n";
    out << "\n";
    std::vector<std::string> styles;
    for (const AblationRow& r : report.rows)
        if (std::find(styles.begin(), styles.end(), r.style) == styles.end()) styles.push_back(r.style);

    out << std::left << std::setw(20) << "variant";
    for (const std::string& s : styles) out << std::right << std::setw(14) << s;
    out << std::right << std::setw(16) << "ref(vangogh)" << "\n";
    for (AblationVariant v : all_variants()) {
        out << std::left << std::setw(20) << variant_name(v);
        for (const std::string& s : styles) {
            std::ostringstream cell;
            for (const AblationRow& r : report.rows)
                if (r.style == s && r.variant == v) {
                    if (r.ok) cell << std::fixed << std::setprecision(4) << r.fid;
                    else cell << "failed";
                }
            out << std::right << std::setw(14) << cell.str();
        }
        out << std::right << std::setw(16) << std::fixed << std::setprecision(2) << reference_fid(v) << "\n";
    }
    for (const AblationRow& r : report.rows)
        if (!r.ok) out << "error [" << r.style << "/" << variant_name(r.variant) << "]: " << r.error << "\n";
    return out.str();
}

}  // namespace lsast
