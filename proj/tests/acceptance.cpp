// Acceptance run: one PASS/FAIL line per criterion. Pass criterion ids
// (C1 ... C12) as arguments to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "lsast/config.hpp"
#include "lsast/error.hpp"
#include "lsast/evaluation.hpp"
#include "lsast/experiment.hpp"
#include "lsast/image_io.hpp"
#include "lsast/model.hpp"
#include "lsast/ops.hpp"
#include "lsast/sampler.hpp"
#include "lsast/toy_data.hpp"
#include "test_util.hpp"

using namespace lsast;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kExpandTol = 1e-10;
constexpr double kRowSumTol = 1e-6;
constexpr double kGradExpandTol = 1e-4;
constexpr double kGradLossTol = 1e-3;
constexpr double kVarianceTol = 0.03;
constexpr double kPosteriorTol = 1e-10;
constexpr double kMinLossDrop = 0.30;
constexpr double kInversionBudget = 1800.0;  // seconds, three seeds
constexpr double kFidSelfTol = 1e-6;
constexpr double kFidMeanTol = 0.02;
constexpr double kFid1dTol = 0.03;
constexpr double kFidInvarianceTol = 1e-9;
constexpr double kLevelTol = 1.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

// C1
Outcome routing_oracle() {
    const PromptLayout layout;  // T = 1000, S = 10, L = 3
    PromptSpace space = null_prompt_space(layout, 2);
    for (int s = 1; s <= 10; ++s)
        for (Layer l : all_layers) {
            const std::vector<double> tag{static_cast<double>(s), static_cast<double>(static_cast<int>(l))};
            space.set_cell(s, l, tag);
        }
    int cases = 0, mismatches = 0;
    for (int t = 1; t <= 1000; ++t) {
        const int expect_stage = (t - 1) / 100 + 1;
        if (stage_of(layout, t) != expect_stage) ++mismatches;
        for (Layer l : all_layers) {
            ++cases;
            const auto cell = space.route(t, l);
            if (cell[0] != expect_stage || cell[1] != static_cast<int>(l)) ++mismatches;
            if (cell.data() != space.table().value().ptr() + ((expect_stage - 1) * 3 + static_cast<int>(l) - 1) * 2)
                ++mismatches;
        }
    }
    return {cases == 3000 && mismatches == 0, std::to_string(cases) + " cases, " + std::to_string(mismatches) + " mismatches"};
}

// Loop oracle for the expansion.
std::vector<double> loop_expand(const PromptSeed& s) {
    const std::size_t n = s.tokens(), d = s.dim();
    const auto& p = s.prompt.value();
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += p[j] / d;
    for (std::size_t j = 0; j < d; ++j) var += (p[j] - mean) * (p[j] - mean) / d;
    std::vector<double> out(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(n);
        double peak = -1e300;
        for (std::size_t m = 0; m < n; ++m) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double x = (p[j] - mean) / std::sqrt(var);
                dot += (s.f_scale.value()[i] * x + s.f_bias.value()[i]) * (s.g_scale.value()[m] * x + s.g_bias.value()[m]);
            }
            w[m] = dot;
            peak = std::max(peak, dot);
        }
        double z = 0.0;
        for (double& v : w) z += v = std::exp(v - peak);
        for (std::size_t m = 0; m < n; ++m)
            for (std::size_t j = 0; j < d; ++j)
                out[i * d + j] += w[m] / z * (s.h_scale.value()[m] * p[j] + s.h_bias.value()[m]);
    }
    return out;
}

PromptSeed random_seed(std::size_t n, std::size_t d, std::uint64_t seed) {
    Engine rng(seed);
    PromptSeed s = PromptSeed::init(n, d, rng);
    s.prompt.mutable_value() = randn({1, d}, rng);
    for (Var* v : {&s.f_scale, &s.f_bias, &s.g_scale, &s.g_bias}) v->mutable_value() = randn({n}, rng, 0.5);
    for (Var* v : {&s.h_scale, &s.h_bias}) v->mutable_value() = randn({n}, rng);
    return s;
}

// C2
Outcome expansion_correctness() {
    const PromptLayout layout;
    double worst = 0.0, worst_row = 0.0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const PromptSeed s = random_seed(30, 16, 1000 + k);
        if (k < 10) {
            const std::vector<double> ref = loop_expand(s);
            const PromptSpace space = expand(s, layout);
            const Tensor& table = space.table().value();
            for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(table[i] - ref[i]));
        }
        const Tensor a = expansion_attention(s);
        for (std::size_t r = 0; r < 30; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 30; ++c) sum += a.at(r, c);
            worst_row = std::max(worst_row, std::abs(sum - 1.0));
        }
    }
    return {worst < kExpandTol && worst_row < kRowSumTol,
            "max |expand - oracle| " + fmt(worst) + " over 10 seeds, max |row sum - 1| " + fmt(worst_row) +
                " over 100 seeds"};
}

// C3
Outcome gradient_checks() {
    using lsast::testing::grad_rel_error;
    double worst_expand = 0.0, worst_loss = 0.0;
    {
        const PromptLayout layout{10, 3, 1000};
        PromptSeed s = random_seed(30, 16, 7);
        auto f = [&] { return lsast::testing::probe(expand(s, layout).table()); };
        for (const auto& [name, v] : s.named_parameters()) worst_expand = std::max(worst_expand, grad_rel_error(f, v));
    }
    {
        const BackboneConfig bc = lsast::testing::micro_backbone();
        Engine rng(8);
        Backbone net(bc, rng);
        net.set_requires_grad(false);
        const PromptLayout layout{4, 3, 20};
        const NoiseSchedule schedule(20);
        PromptSeed s = random_seed(12, 8, 9);
        StepBatch batch;
        batch.images = randn({2, 3, 8, 8}, rng, 0.5);
        batch.eps = randn({2, 3, 8, 8}, rng);
        batch.t = {4, 17};
        Denoiser d = [&](const Var& z, const std::vector<int>& t, const BandTensors& c) {
            return net.predict_noise(z, t, c);
        };
        auto f = [&] { return denoising_loss(d, schedule, batch, band_context(expand(s, layout), batch.t)); };
        for (const auto& [name, v] : s.named_parameters()) worst_loss = std::max(worst_loss, grad_rel_error(f, v));
    }
    return {worst_expand < kGradExpandTol && worst_loss < kGradLossTol,
            "expansion rel err " + fmt(worst_expand) + ", prompt loss rel err " + fmt(worst_loss)};
}

// C4
Outcome stage_locality() {
    const BackboneConfig bc = lsast::testing::micro_backbone();
    Engine rng(10);
    const Backbone net(bc, rng);
    const NoiseSchedule schedule(20);
    const PromptLayout layout{4, 3, 20};  // stages of 5 timesteps
    const PromptSeed seed = random_seed(12, 8, 11);
    const Tensor init = randn({2, 3, 8, 8}, rng);
    auto run = [&](const PromptSpace& space, int t0) {
        std::vector<Engine> rngs{Engine(12), Engine(13)};
        return sample(net, schedule, space, init, t0, {}, rngs);
    };
    int checks = 0, wrong = 0;
    for (int t0 : {3, 5, 6, 12, 20}) {
        const Tensor base = run(expand(seed, layout), t0);
        for (int s = 1; s <= 4; ++s) {
            PromptSpace perturbed = expand(seed, layout);
            for (Layer l : all_layers) {
                std::vector<double> cell(perturbed.cell(s, l).begin(), perturbed.cell(s, l).end());
                for (double& v : cell) v += 0.5;
                perturbed.set_cell(s, l, cell);
            }
            const bool visited = (s - 1) * 5 + 1 <= t0;
            const bool changed = !run(perturbed, t0).bitwise_equal(base);
            ++checks;
            wrong += changed != visited;
        }
    }
    return {wrong == 0, std::to_string(checks) + " (t0, stage) pairs, " + std::to_string(wrong) + " violations"};
}

// C5
Outcome layer_locality() {
    BackboneConfig bc;  // full-size toy backbone
    Engine rng(14);
    Backbone net(bc, rng);
    const PromptLayout layout;
    PromptSeed seed = random_seed(30, 768, 15);
    const Var z = Var::constant(randn({1, 3, 64, 64}, rng));
    const int t = 437;
    const std::map<std::string, Layer> expected_band{
        {"unet.enc0.attn", Layer::fine},   {"unet.enc1.attn", Layer::moderate}, {"unet.enc2.attn", Layer::coarse},
        {"unet.mid.attn", Layer::coarse},  {"unet.dec2.attn", Layer::coarse},   {"unet.dec1.attn", Layer::moderate},
        {"unet.dec0.attn", Layer::fine}};

    auto contexts = [&](const PromptSpace& space) {
        std::map<std::string, Tensor> seen;
        net.set_observer([&](const BlockEvent& e) { seen[e.name] = e.context; });
        net.predict_noise(z, {t}, band_context(space, {t}));
        net.set_observer({});
        return seen;
    };
    int violations = 0;
    const PromptSpace space = expand(seed, layout);
    const auto base = contexts(space);
    if (base.size() != 7) ++violations;
    for (const auto& [name, ctx] : base) {
        auto it = expected_band.find(name);
        if (it == expected_band.end()) {
            ++violations;
            continue;
        }
        const auto cell = space.route(t, it->second);
        if (!std::equal(cell.begin(), cell.end(), ctx.ptr())) ++violations;
    }
    for (Layer band : all_layers) {
        PromptSpace perturbed = expand(seed, layout);
        std::vector<double> cell(perturbed.route(t, band).begin(), perturbed.route(t, band).end());
        for (double& v : cell) v = -v + 1.0;
        perturbed.set_cell(stage_of(layout, t), band, cell);
        const auto after = contexts(perturbed);
        for (const auto& [name, ctx] : after) {
            const bool changed = !ctx.bitwise_equal(base.at(name));
            if (changed != (expected_band.at(name) == band)) ++violations;
        }
    }
    return {violations == 0, "7 attention blocks x 3 bands, " + std::to_string(violations) + " violations"};
}

// C6
Outcome content_noop() {
    int mismatches = 0;
    for (bool inject : {false, true}) {
        BackboneConfig bc;
        bc.inject_encoder = inject;
        Engine rng(16);
        const Backbone net(bc, rng);
        const ContentBranch branch(bc, rng);
        const Tensor photo = toy::photo(64, rng);
        const EdgeMap edges = canny(to_grayscale(photo));
        const BandTensors residuals = encode_content(branch, edges);
        const Var z = Var::constant(randn({1, 3, 64, 64}, rng));
        BandTensors ctx;
        for (Layer l : all_layers) ctx[l] = Var::constant(randn({1, 1, 768}, rng));
        NoGradGuard no_grad;
        const Tensor a = net.predict_noise(z, {250}, ctx).value();
        const Tensor b = net.predict_noise(z, {250}, ctx, &residuals).value();
        mismatches += !a.bitwise_equal(b);
    }
    return {mismatches == 0, "zero-init branch vs no branch, encoder injection off/on: " + std::to_string(mismatches) +
                                 " differing outputs"};
}

// C7
Outcome ddpm_identities() {
    const NoiseSchedule s;
    Engine rng(17);
    const std::size_t n = 400000;
    double worst_var = 0.0;
    for (int t : {100, 500, 900}) {
        const double ab = s.alpha_bar(t);
        const Tensor z0({n}, 0.3);
        const Tensor z = add_noise(s, z0, t, randn({n}, rng));
        double mean = 0.0, var = 0.0;
        for (double v : z.data()) mean += v / n;
        for (double v : z.data()) var += (v - mean) * (v - mean) / n;
        worst_var = std::max(worst_var, std::abs(var / (1.0 - ab) - 1.0));
    }
    double worst_mean = 0.0;
    const Tensor x0 = randn({64}, rng), eps = randn({64}, rng);
    for (int t = 2; t <= 1000; t += 7) {
        const Tensor zt = add_noise(s, x0, t, eps);
        const Tensor mu = denoise_mean(s, zt, t, eps);
        const double ab = s.alpha_bar(t), abp = s.alpha_bar(t - 1), b = s.beta(t);
        for (std::size_t i = 0; i < 64; ++i) {
            const double post = std::sqrt(abp) * b / (1 - ab) * x0[i] + std::sqrt(1 - b) * (1 - abp) / (1 - ab) * zt[i];
            worst_mean = std::max(worst_mean, std::abs(mu[i] - post));
        }
    }
    return {worst_var < kVarianceTol && worst_mean < kPosteriorTol,
            "variance law rel err " + fmt(worst_var) + ", posterior mean abs err " + fmt(worst_mean)};
}

// Shared pretrained toy backbone for C8 and C10.
struct Pretrained {
    ExperimentConfig config;
    std::unique_ptr<Model> model;
    double seconds = 0.0;
};

Pretrained& pretrained() {
    static Pretrained p = [] {
        Pretrained out;
        out.config = resolve_config(default_values());
        const auto t0 = Clock::now();
        out.model = std::make_unique<Model>(make_model(out.config, out.config.seed));
        pretrain(*out.model, out.config);
        out.seconds = seconds_since(t0);
        std::cout << "  (backbone pretraining: " << fmt(out.seconds, 3) << " s)" << std::endl;
        return out;
    }();
    return p;
}

// C8
Outcome training_signal() {
    Pretrained& p = pretrained();
    std::ostringstream detail;
    bool all = true;
    const auto t0 = Clock::now();
    for (std::uint64_t seed : {0, 1, 2}) {
        ExperimentConfig config = p.config;
        config.seed = seed;
        config.train.total_steps = 2000;
        config.train.decay_step = 1500;
        Model model = clone_model(*p.model);
        reset_prompts(model, config.layout, seed);
        const StyleDataset data = style_dataset(config);
        const TrainResult r = train_prompts(model, config, data);
        const LossSummary s = summarize(r.losses);
        const double drop = 1.0 - s.last_window / s.first_window;
        all = all && data.size() == 8 && drop >= kMinLossDrop;
        detail << "seed " << seed << ": " << fmt(s.first_window) << " -> " << fmt(s.last_window) << " (drop "
               << fmt(100 * drop, 3) << "%); ";
    }
    const double inv = seconds_since(t0);
    // The budget covers the inversions; the backbone is a shared fixture.
    detail << "inversion " << fmt(inv, 3) << " s (pretrain " << fmt(p.seconds, 3) << " s)";
    return {all && inv <= kInversionBudget, detail.str()};
}

Eigen::MatrixXd gaussian(std::size_t n, const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd z(n, mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nd(rng);
    return (z * chol.transpose()).rowwise() + mean.transpose();
}

// C9
Outcome fid_oracles() {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const int d = 8;
    MatrixXd l = MatrixXd::Identity(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < i; ++j) l(i, j) = 0.1 * ((i * 7 + j * 3) % 5 - 2);
    VectorXd mu(d);
    for (int i = 0; i < d; ++i) mu[i] = 0.3 * (i % 3) - 0.2;

    const MatrixXd a = gaussian(100000, VectorXd::Zero(d), l, 1);
    const MatrixXd b = gaussian(100000, mu, l, 2);
    const double self = fid(a, a);
    const double mean_err = std::abs(fid(a, b) / mu.squaredNorm() - 1.0);

    const MatrixXd x = gaussian(200000, VectorXd::Constant(1, 1.0), MatrixXd::Constant(1, 1, 0.5), 3);
    const MatrixXd y = gaussian(200000, VectorXd::Constant(1, -0.5), MatrixXd::Constant(1, 1, 2.0), 4);
    const double closed = 1.5 * 1.5 + 1.5 * 1.5;
    const double err1d = std::abs(fid(x, y) / closed - 1.0);

    const MatrixXd p = gaussian(500, VectorXd::Zero(d), l, 5), q = gaussian(400, mu, l * 1.3, 6);
    const double pq = fid(p, q);
    MatrixXd reversed = p.colwise().reverse();
    const double sym = std::abs(fid(q, p) - pq), perm = std::abs(fid(reversed, q) - pq);

    const bool ok = std::abs(self) <= kFidSelfTol && mean_err < kFidMeanTol && err1d < kFid1dTol &&
                    sym <= kFidInvarianceTol * pq && perm <= kFidInvarianceTol * pq;
    return {ok, "fid(a,a) " + fmt(self) + ", equal-cov rel err " + fmt(mean_err) + ", 1-D rel err " + fmt(err1d) +
                    ", symmetry " + fmt(sym) + ", permutation " + fmt(perm)};
}

// C10
Outcome ablation_harness() {
    Pretrained& p = pretrained();
    ExperimentConfig config = p.config;
    config.ablate.steps = 200;
    config.ablate.samples = 4;
    config.ablate.styles = {"swirl"};
    const auto t0 = Clock::now();
    const AblationReport report = run_ablations(config, *p.model);
    const double secs = seconds_since(t0);
    std::set<AblationVariant> seen;
    std::map<AblationVariant, std::size_t> cells;
    bool rows_ok = true;
    for (const AblationRow& r : report.rows) {
        seen.insert(r.variant);
        cells[r.variant] = r.prompt_cells;
        rows_ok = rows_ok && r.ok && std::isfinite(r.fid);
    }
    const bool identity = cells[AblationVariant::full] == 30 && cells[AblationVariant::no_step_and_layer] * 30 ==
                                                                   cells[AblationVariant::full];
    std::cout << report_table(report);
    return {report.complete && seen.size() == 5 && rows_ok && identity && secs <= 1200.0,
            std::to_string(report.rows.size()) + " rows, cells full " + std::to_string(cells[AblationVariant::full]) +
                " vs global " + std::to_string(cells[AblationVariant::no_step_and_layer]) + ", " + fmt(secs, 3) + " s"};
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(LSAST_CLI) + " " + args + " >> " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::uint64_t file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

// Hash of every regular file under root, keyed by relative path.
std::map<std::string, std::uint64_t> tree_hash(const fs::path& root) {
    std::map<std::string, std::uint64_t> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_hash(e.path());
    return out;
}

// C11
Outcome reproducibility() {
    const fs::path work = fs::temp_directory_path() / "lsast_acceptance_repro";
    fs::remove_all(work);
    fs::create_directories(work);
    const fs::path log = work / "log.txt";
    std::ofstream(work / "micro.yaml") << "backbone: {resolution: 16, channels: [4, 8, 8], res_blocks: 1, norm_groups: 2, "
                                          "time_dim: 8}\nprompt: {dim: 16, stages: 5}\ndiffusion: {timesteps: 50}\n"
                                          "pretrain: {steps: 20, decay_step: 15, photo_count: 8, concept_count: 4, "
                                          "branch_steps: 10}\ntrain: {total_steps: 20, decay_step: 15}\n"
                                          "data: {style_count: 4, content_count: 2}\n"
                                          "ablate: {steps: 10, samples: 2}\neval: {feature_dim: 8}\n";
    const std::string cfg = " --config " + (work / "micro.yaml").string() + " --deterministic";
    int failures = 0;
    for (const char* run : {"a", "b"}) {
        const fs::path out = work / run;
        const std::string o = out.string();
        const std::vector<std::string> commands{
            "synth-data" + cfg + " --kind photos --count 3 --resolution 16 --out " + o + "/photos",
            "synth-data" + cfg + " --kind stipple --count 3 --resolution 16 --out " + o + "/stipple",
            "pretrain-backbone" + cfg + " --out " + o + "/pre",
            "train-prompts" + cfg + " --backbone " + o + "/pre/backbone.ckpt --style-dir " + (work / "a/stipple").string() +
                " --out " + o + "/prompts",
            "stylize" + cfg + " --checkpoint " + o + "/prompts/prompts.ckpt --content " + o +
                "/photos/0000.png --strength 0.6 --out " + o + "/stylized.png",
            "extract-edges" + cfg + " --image " + o + "/photos/0001.png --out " + o + "/edges.png",
            "eval-fid" + cfg + " " + o + "/photos " + o + "/stipple --out " + o + "/fid.txt",
            "ablate" + cfg + " --backbone " + o + "/pre/backbone.ckpt --out " + o + "/ablate",
        };
        for (const std::string& c : commands)
            if (run_cli(c, log) != 0) {
                ++failures;
                std::cout << "  command failed: " << c << "\n";
            }
    }
    const auto a = tree_hash(work / "a"), b = tree_hash(work / "b");
    int differing = 0;
    for (const auto& [name, h] : a)
        if (!b.count(name) || b.at(name) != h) {
            ++differing;
            std::cout << "  differs: " << name << "\n";
        }
    return {failures == 0 && differing == 0 && a.size() == b.size() && a.size() >= 15,
            "8 commands x 2 runs, " + std::to_string(a.size()) + " files hashed, " + std::to_string(differing) +
                " differ, " + std::to_string(failures) + " command failures"};
}

// C12
Outcome tau_zero() {
    const fs::path work = fs::temp_directory_path() / "lsast_acceptance_tau0";
    fs::remove_all(work);
    fs::create_directories(work);
    const fs::path log = work / "log.txt";
    const ExperimentConfig config = lsast::testing::micro_config();
    save_model(work / "model.ckpt", make_model(config, 0), ModelProvenance{"prompts", "", 0, {}, {}});
    Engine rng(18);
    write_png(work / "content.png", toy::photo(37, rng));
    std::ofstream(work / "micro.yaml") << echo_config(load_config_values(
        {}, {"backbone.resolution=8", "backbone.channels=[4, 4, 4]", "backbone.res_blocks=1", "backbone.norm_groups=2",
             "backbone.time_dim=8", "prompt.dim=8", "diffusion.timesteps=20", "prompt.stages=4"}));
    double worst = 0.0;
    bool ran = true;
    for (int res : {8, 24, 37, 64}) {
        const fs::path out = work / ("out" + std::to_string(res) + ".png");
        ran = ran && run_cli("stylize --config " + (work / "micro.yaml").string() + " --checkpoint " +
                                 (work / "model.ckpt").string() + " --content " + (work / "content.png").string() +
                                 " --strength 0 --resolution " + std::to_string(res) + " --out " + out.string(),
                             log) == 0;
        if (!ran) break;
        const Tensor expect = resize_bilinear(read_image(work / "content.png"), res, res);
        worst = std::max(worst, 255.0 * max_abs_diff(read_image(out), expect));
    }
    return {ran && worst <= kLevelTol + 1e-9, "max per-pixel error " + fmt(worst) + " levels over 4 output sizes"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::pair<std::string, std::function<Outcome()>>>> criteria{
        {"C1", {"routing oracle", routing_oracle}},
        {"C2", {"expansion correctness", expansion_correctness}},
        {"C3", {"gradient checks", gradient_checks}},
        {"C4", {"stage locality", stage_locality}},
        {"C5", {"layer locality", layer_locality}},
        {"C6", {"zero-init content branch is a no-op", content_noop}},
        {"C7", {"DDPM identities", ddpm_identities}},
        {"C8", {"training signal", training_signal}},
        {"C9", {"FID oracles", fid_oracles}},
        {"C10", {"ablation harness", ablation_harness}},
        {"C11", {"reproducibility", reproducibility}},
        {"C12", {"tau = 0 stylize", tau_zero}},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0, ran = 0;
    for (const auto& [id, entry] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = entry.second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        ++ran;
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << entry.first << ": " << o.detail << " ["
                  << fmt(seconds_since(t0), 3) << " s]" << std::endl;
    }
    std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
