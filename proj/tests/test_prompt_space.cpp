#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "lsast/error.hpp"
#include "lsast/prompt_space.hpp"
#include "test_util.hpp"

using namespace lsast;

namespace {

// Loop-based reference for the expansion, written independently of the op graph.
std::vector<std::vector<double>> reference_expand(const PromptSeed& s) {
    const std::size_t n = s.tokens(), d = s.dim();
    const auto& p = s.prompt.value();
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += p[j];
    mean /= d;
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (p[j] - mean) * (p[j] - mean);
    var /= d;
    std::vector<double> normed(d);
    for (std::size_t j = 0; j < d; ++j) normed[j] = (p[j] - mean) / std::sqrt(var);

    std::vector<std::vector<double>> q(n, std::vector<double>(d)), k = q, v = q, out = q;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            q[i][j] = s.f_scale.value()[i] * normed[j] + s.f_bias.value()[i];
            k[i][j] = s.g_scale.value()[i] * normed[j] + s.g_bias.value()[i];
            v[i][j] = s.h_scale.value()[i] * p[j] + s.h_bias.value()[i];
        }
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(n);
        double peak = -1e300;
        for (std::size_t m = 0; m < n; ++m) {
            for (std::size_t j = 0; j < d; ++j) logits[m] += q[i][j] * k[m][j];
            peak = std::max(peak, logits[m]);
        }
        double z = 0.0;
        for (double& l : logits) z += l = std::exp(l - peak);
        for (std::size_t m = 0; m < n; ++m)
            for (std::size_t j = 0; j < d; ++j) out[i][j] += logits[m] / z * v[m][j];
    }
    return out;
}

PromptSeed random_seed(std::size_t n, std::size_t d, std::uint64_t s) {
    Engine rng(s);
    PromptSeed seed = PromptSeed::init(n, d, rng);
    seed.prompt.mutable_value() = randn({1, d}, rng);
    seed.f_scale.mutable_value() = randn({n}, rng, 0.5);
    seed.f_bias.mutable_value() = randn({n}, rng, 0.5);
    seed.g_scale.mutable_value() = randn({n}, rng, 0.5);
    seed.g_bias.mutable_value() = randn({n}, rng, 0.5);
    seed.h_scale.mutable_value() = randn({n}, rng);
    seed.h_bias.mutable_value() = randn({n}, rng);
    return seed;
}

void expect_matches_reference(const PromptSeed& seed, const PromptLayout& layout) {
    const PromptSpace space = expand(seed, layout);
    const auto ref = reference_expand(seed);
    const Tensor& table = space.table().value();
    for (std::size_t i = 0; i < ref.size(); ++i)
        for (std::size_t j = 0; j < ref[i].size(); ++j) EXPECT_NEAR(table.at(i, j), ref[i][j], 1e-10);
}

}  // namespace

TEST(NormalizeSeed, WorkedExample) {
    const Tensor out = normalize_seed(Tensor({1, 4}, std::vector<double>{1, 2, 3, 4}));
    const double expect[4] = {-1.3416407865, -0.4472135955, 0.4472135955, 1.3416407865};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[i], expect[i], 1e-9);
}

TEST(NormalizeSeed, Idempotent) {
    Engine rng(1);
    const Tensor once = normalize_seed(randn({1, 32}, rng, 3.0));
    const Tensor twice = normalize_seed(once);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-12);
}

TEST(NormalizeSeed, ConstantRowIsDegenerate) {
    try {
        normalize_seed(Tensor({1, 4}, 5.0));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate seed"), std::string::npos);
    }
}

TEST(Expand, MatchesLoopReferenceSmall) {
    PromptLayout layout{3, 1, 3};
    expect_matches_reference(random_seed(3, 4, 2), layout);
}

TEST(Expand, MatchesLoopReferenceFull) {
    PromptLayout layout{10, 3, 1000};
    expect_matches_reference(random_seed(30, 16, 3), layout);
}

TEST(Expand, ZeroQueryKeyGivesUniformAttention) {
    PromptSeed seed = random_seed(6, 5, 4);
    for (Var* v : {&seed.f_scale, &seed.f_bias, &seed.g_scale, &seed.g_bias}) v->mutable_value() = Tensor({6});
    const PromptSpace space = expand(seed, PromptLayout{2, 3, 10});
    // Every row equals the mean of the value tokens.
    std::vector<double> mean(5);
    for (std::size_t m = 0; m < 6; ++m)
        for (std::size_t j = 0; j < 5; ++j)
            mean[j] += (seed.h_scale.value()[m] * seed.prompt.value()[j] + seed.h_bias.value()[m]) / 6.0;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(space.table().value().at(i, j), mean[j], 1e-12);
}

TEST(Expand, DefaultShapeAndGrouping) {
    PromptLayout layout;
    Engine rng(5);
    const PromptSpace space = expand(PromptSeed::init(30, 768, rng), layout);
    EXPECT_EQ(space.grouped().shape(), (Shape{10, 3, 768}));
    // Stage-major: row (s-1)*3 + (layer-1).
    const Tensor g = space.grouped();
    for (int s = 1; s <= 10; ++s)
        for (Layer l : all_layers) {
            auto cell = space.cell(s, l);
            EXPECT_EQ(cell[7], g[((s - 1) * 3 + static_cast<int>(l) - 1) * 768 + 7]);
        }
}

TEST(Expand, TokenCountMismatchRejected) {
    Engine rng(6);
    EXPECT_THROW(expand(PromptSeed::init(29, 8, rng), PromptLayout{}), Error);
}

TEST(Expand, OverflowReported) {
    PromptSeed seed = random_seed(4, 4, 7);
    seed.f_scale.mutable_value() = Tensor({4}, 1e200);
    seed.g_scale.mutable_value() = Tensor({4}, 1e200);
    try {
        expand(seed, PromptLayout{4, 1, 8});
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numerical);
    }
}

TEST(Expand, GradientMatchesFiniteDifferences) {
    PromptLayout layout{2, 3, 10};
    PromptSeed seed = random_seed(6, 5, 8);
    auto f = [&] { return lsast::testing::probe(expand(seed, layout).table()); };
    for (auto& [name, v] : seed.named_parameters())
        EXPECT_LT(lsast::testing::grad_rel_error(f, v), 1e-4) << name;
}

TEST(StageOf, Examples) {
    PromptLayout layout;
    EXPECT_EQ(stage_of(layout, 1), 1);
    EXPECT_EQ(stage_of(layout, 100), 1);
    EXPECT_EQ(stage_of(layout, 101), 2);
    EXPECT_EQ(stage_of(layout, 500), 5);
    EXPECT_EQ(stage_of(layout, 501), 6);
    EXPECT_EQ(stage_of(layout, 1000), 10);
    EXPECT_THROW(stage_of(layout, 0), Error);
    EXPECT_THROW(stage_of(layout, 1001), Error);
}

TEST(StageOf, EachStageCoversEqualContiguousRange) {
    for (int stages : {1, 4, 10, 25}) {
        PromptLayout layout{stages, 3, 1000};
        std::vector<int> count(stages + 1);
        int prev = 1;
        for (int t = 1; t <= 1000; ++t) {
            const int s = stage_of(layout, t);
            ASSERT_GE(s, prev);
            ASSERT_LE(s - prev, 1);
            prev = s;
            ++count[s];
        }
        for (int s = 1; s <= stages; ++s) EXPECT_EQ(count[s], 1000 / stages);
    }
}

TEST(StageOf, DenoiseOrderReverses) {
    PromptLayout layout{10, 3, 1000, StageOrientation::denoise_order};
    EXPECT_EQ(stage_of(layout, 1000), 1);
    EXPECT_EQ(stage_of(layout, 1), 10);
}

TEST(Route, ReturnsTheOwningCell) {
    PromptLayout layout;
    PromptSpace space = null_prompt_space(layout, 4);
    int marker = 0;
    for (int s = 1; s <= 10; ++s)
        for (Layer l : all_layers) {
            const double m = ++marker;
            std::vector<double> v{m, m, m, m};
            space.set_cell(s, l, v);
        }
    EXPECT_EQ(space.route(1, Layer::coarse)[0], 1.0);
    EXPECT_EQ(space.route(1, Layer::fine)[0], 3.0);
    EXPECT_EQ(space.route(250, Layer::moderate)[0], 8.0);
    EXPECT_EQ(space.route(1000, Layer::fine)[0], 30.0);
    // Routing only depends on the stage: all t in one stage read the same cell.
    for (int t = 401; t <= 500; ++t) EXPECT_EQ(space.route(t, Layer::moderate)[0], 14.0);
}

TEST(Route, EditingOneCellOnlyAffectsItsStageAndBand) {
    PromptLayout layout;
    PromptSpace space = null_prompt_space(layout, 3);
    std::vector<double> v{1, 2, 3};
    space.set_cell(4, Layer::fine, v);
    std::set<int> touched;
    for (int t = 1; t <= 1000; ++t)
        for (Layer l : all_layers)
            if (space.route(t, l)[0] != 0.0) {
                EXPECT_EQ(l, Layer::fine);
                touched.insert(t);
            }
    EXPECT_EQ(touched.size(), 100u);
    EXPECT_EQ(*touched.begin(), 301);
    EXPECT_EQ(*touched.rbegin(), 400);
}

TEST(Route, SingleLayerSharesAcrossBands) {
    PromptLayout layout{10, 1, 1000};
    PromptSpace space = null_prompt_space(layout, 2);
    std::vector<double> v{7, 8};
    space.set_cell(2, Layer::coarse, v);
    for (Layer l : all_layers) EXPECT_EQ(space.route(150, l)[1], 8.0);
}

TEST(Route, BatchIsDifferentiableAndRoutesPerElement) {
    PromptLayout layout{2, 3, 10};
    PromptSeed seed = random_seed(6, 4, 9);
    const PromptSpace space = expand(seed, layout);
    const Var ctx = space.route_batch({3, 9}, Layer::moderate);
    EXPECT_EQ(ctx.shape(), (Shape{2, 1, 4}));
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(ctx.value()[j], space.route(3, Layer::moderate)[j]);
        EXPECT_EQ(ctx.value()[4 + j], space.route(9, Layer::moderate)[j]);
    }
    auto f = [&] { return lsast::testing::probe(expand(seed, layout).route_batch({3, 9}, Layer::moderate)); };
    EXPECT_LT(lsast::testing::grad_rel_error(f, seed.prompt), 1e-4);
}

TEST(Layout, Validation) {
    EXPECT_THROW((PromptLayout{3, 3, 1000}).validate(), Error);
    EXPECT_THROW((PromptLayout{10, 2, 1000}).validate(), Error);
    EXPECT_NO_THROW((PromptLayout{1, 1, 1000}).validate());
}
