#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "lsast/error.hpp"
#include "lsast/image_io.hpp"
#include "lsast/model.hpp"
#include "lsast/pipeline.hpp"
#include "lsast/toy_data.hpp"
#include "test_util.hpp"

using namespace lsast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "lsast_test_pipeline";
    fs::create_directories(dir);
    return dir / name;
}

class PipelineTest : public ::testing::Test {
protected:
    void SetUp() override {
        config = lsast::testing::micro_config();
        Model m = make_model(config, 1);
        // Give the prompt seed some spread so prompts are not near zero.
        Engine rng(2);
        m.seed.prompt.mutable_value() = randn({1, 8}, rng);
        save_model(ckpt, m, ModelProvenance{"prompts", echo_config(default_values()), 1, {}, {}});
        Engine img(3);
        content = toy::photo(16, img);
        write_png(content_path, content);
    }

    StylizeRequest request(double tau, const std::string& out) const {
        StylizeRequest r;
        r.content = content_path;
        r.checkpoint = ckpt;
        r.output = scratch(out);
        r.strength = tau;
        r.seed = 4;
        return r;
    }

    ExperimentConfig config;
    fs::path ckpt = scratch("micro.ckpt");
    fs::path content_path = scratch("content.png");
    Tensor content;
};

}  // namespace

TEST(StartTimestep, Rounds) {
    EXPECT_EQ(start_timestep(0.0, 1000), 0);
    EXPECT_EQ(start_timestep(0.8, 1000), 800);
    EXPECT_EQ(start_timestep(1.0, 1000), 1000);
    EXPECT_EQ(start_timestep(0.55, 20), 11);
    EXPECT_THROW(start_timestep(1.5, 1000), Error);
}

TEST_F(PipelineTest, ZeroStrengthReturnsResizedContent) {
    StylizeRequest r = request(0.0, "tau0.png");
    r.resolution = 12;
    const Tensor out = stylize(r);
    const Tensor expect = resize_bilinear(read_image(content_path), 12, 12);
    const Tensor written = read_image(r.output);
    ASSERT_EQ(written.shape(), expect.shape());
    EXPECT_LE(max_abs_diff(written, expect), 1.0 / 255.0 + 1e-12);
    EXPECT_LE(max_abs_diff(out, expect), 1e-15);
}

TEST_F(PipelineTest, DeterministicForFixedSeed) {
    const Tensor a = stylize(request(0.8, "a.png"));
    const Tensor b = stylize(request(0.8, "b.png"));
    EXPECT_TRUE(a.bitwise_equal(b));
    StylizeRequest other = request(0.8, "c.png");
    other.seed = 5;
    EXPECT_GT(max_abs_diff(a, stylize(other)), 0.0);
}

TEST_F(PipelineTest, FullStrengthDiffersFromContent) {
    const Tensor out = stylize(request(1.0, "full.png"));
    EXPECT_EQ(out.shape(), (Shape{3, 8, 8}));
    EXPECT_GT(max_abs_diff(out, resize_bilinear(content, 8, 8)), 0.05);
}

TEST_F(PipelineTest, InvalidStrengthIsConfigError) {
    try {
        stylize(request(1.5, "bad.png"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("strength"), std::string::npos);
    }
    StylizeRequest r = request(0.5, "bad2.png");
    r.content_strength = -1.0;
    EXPECT_THROW(stylize(r), Error);
}

TEST_F(PipelineTest, MissingInputsAreIoErrors) {
    StylizeRequest r = request(0.5, "x.png");
    r.content = scratch("missing.png");
    fs::remove(r.content);
    try {
        stylize(r);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}

TEST_F(PipelineTest, ContentStrengthZeroMatchesUntrainedBranch) {
    Model trained = load_model(ckpt);
    Engine rng(6);
    for (auto& [name, v] : trained.branch.parameters()) {
        Var h = v;
        h.mutable_value() = randn(v.shape(), rng, 0.2);
    }
    const Model untrained = load_model(ckpt);
    const std::vector<Tensor> c{resize_bilinear(content, 8, 8)};
    const Tensor off = stylize_batch(trained, c, 0.6, 0.0, {}, 7);
    const Tensor base = stylize_batch(untrained, c, 0.6, 1.0, {}, 7);
    const Tensor on = stylize_batch(trained, c, 0.6, 1.0, {}, 7);
    EXPECT_TRUE(off.bitwise_equal(base));
    EXPECT_GT(max_abs_diff(on, base), 0.0);
}

TEST_F(PipelineTest, BatchOutputsIndependentOfBatchComposition) {
    const Model m = load_model(ckpt);
    Engine rng(8);
    const Tensor other = toy::photo(8, rng);
    const Tensor c = resize_bilinear(content, 8, 8);
    const Tensor solo = stylize_batch(m, {c}, 0.5, 1.0, {}, 9);
    const Tensor pair = stylize_batch(m, {c, other}, 0.5, 1.0, {}, 9);
    for (std::size_t i = 0; i < solo.size(); ++i) EXPECT_NEAR(pair[i], solo[i], 1e-12);
}

TEST(Model, CheckpointRoundTripAndCompatibility) {
    const ExperimentConfig config = lsast::testing::micro_config();
    Model m = make_model(config, 11);
    const fs::path p = scratch("roundtrip.ckpt");
    LossSummary s{3, 1.0, 0.5, 0.4};
    save_model(p, m, ModelProvenance{"prompts", "seed: 11\n", 11, s, {{"noise", "1 2 3"}}});
    const Model back = load_model(p);
    EXPECT_EQ(back.layout.tokens(), m.layout.tokens());
    EXPECT_EQ(back.backbone_config.resolution, 8);
    for (std::size_t i = 0; i < m.backbone.parameters().size(); ++i)
        EXPECT_TRUE(m.backbone.parameters()[i].second.value().bitwise_equal(back.backbone.parameters()[i].second.value()));
    EXPECT_TRUE(m.seed.prompt.value().bitwise_equal(back.seed.prompt.value()));
    const Checkpoint ck = load_checkpoint(p);
    EXPECT_EQ(ck.metadata.at("S"), 4);
    EXPECT_EQ(ck.metadata.at("L"), 3);
    EXPECT_EQ(ck.metadata.at("T"), 20);
    EXPECT_EQ(ck.metadata.at("stage_orientation"), "noise_level");
    EXPECT_EQ(ck.metadata.at("grouping_order"), "stage_major");
    EXPECT_EQ(ck.metadata.at("loss_summary").at("last_window"), 0.5);
}

TEST(Model, ClonesAreIndependent) {
    const ExperimentConfig config = lsast::testing::micro_config();
    Model a = make_model(config, 12);
    Model b = clone_model(a);
    EXPECT_TRUE(a.seed.prompt.value().bitwise_equal(b.seed.prompt.value()));
    b.seed.prompt.mutable_value()[0] += 1.0;
    EXPECT_NE(a.seed.prompt.value()[0], b.seed.prompt.value()[0]);
    reset_prompts(b, PromptLayout{1, 1, 20}, 12);
    EXPECT_EQ(b.seed.tokens(), 1u);
    EXPECT_EQ(a.seed.tokens(), 12u);
}
