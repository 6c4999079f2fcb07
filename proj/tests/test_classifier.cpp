#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gaborcomp/classifier.hpp"

using namespace gaborcomp;

namespace {

// Random stack for the M=16 architecture: three levels, 2^j x 16/2^j.
FeatureStack random_stack(uint64_t seed, int m, std::optional<MurmurClass> label) {
    Rng rng(seed);
    FeatureStack stack;
    stack.m = m;
    stack.label = label;
    stack.segment_ref = "t" + std::to_string(seed);
    int levels = 0;
    while ((2 << levels) < m) ++levels;
    for (int j = 1; j <= levels; ++j) {
        Eigen::MatrixXd mat(1 << j, m >> j);
        for (long c = 0; c < mat.cols(); ++c)
            for (long r = 0; r < mat.rows(); ++r)
                mat(r, c) = std::abs(rng.next_gaussian());
        stack.matrices.push_back(mat);
    }
    return stack;
}

// Classes separated by which quadrant of the level-1 matrix carries a
// strong constant block.
FeatureStack class_marked_stack(uint64_t seed, int cls) {
    FeatureStack stack = random_stack(seed, 16, static_cast<MurmurClass>(cls));
    Eigen::MatrixXd& mat = stack.matrices[0];  // 2 x 8
    const long r = cls / 2, c0 = (cls % 2) * 4;
    for (long c = c0; c < c0 + 4; ++c) mat(r, c) += 4.0;
    return stack;
}

}  // namespace

TEST_CASE("architecture and parameter count follow the kernel law") {
    const ModelArch arch = ModelArch::make(512, 4, 32);
    CHECK(arch.j_count == 8);
    CHECK(arch.d_model == 32);
    REQUIRE(arch.branches.size() == 8);
    int tokens = 0;
    for (int j = 1; j <= 8; ++j) {
        const BranchShape& b = arch.branches[static_cast<size_t>(j - 1)];
        CHECK(b.rows == 1 << j);
        CHECK(b.cols == 512 >> j);
        const int kh = std::clamp(
            static_cast<int>(std::lround(std::pow(2.0, j / 1.75))), 1, b.rows);
        const int kw = std::clamp(
            static_cast<int>(std::lround(std::pow(2.0, 6.0 - j / 1.75))), 1, b.cols);
        CHECK(b.kh == kh);
        CHECK(b.kw == kw);
        tokens += ((b.rows + kh - 1) / kh) * ((b.cols + kw - 1) / kw);
    }
    CHECK(arch.total_tokens() == tokens);
    CHECK(arch.total_tokens() == 87);

    const ParamCount count = count_params(arch);
    CHECK(count.total > 0);
    long sum = 0;
    for (const auto& [name, n] : count.entries) sum += n;
    CHECK(sum == count.total);
    const Model model = init_model(arch, 3);
    CHECK(model.params.size() == count.total);
}

TEST_CASE("initialization is deterministic and layout-complete") {
    const ModelArch arch = ModelArch::make(16, 2, 2);
    const Model a = init_model(arch, 11);
    const Model b = init_model(arch, 11);
    const Model c = init_model(arch, 12);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);

    // Biases start at zero, gains at one, weights bounded by the Glorot
    // limit of their slice.
    for (size_t s = 0; s < a.layout.slices.size(); ++s) {
        const auto& slice = a.layout.slices[s];
        const auto view = a.view(static_cast<int>(s));
        if (slice.kind == ParamLayout::Kind::Bias) {
            CHECK(view.cwiseAbs().maxCoeff() == 0.0);
        } else if (slice.kind == ParamLayout::Kind::Gain) {
            CHECK(view.minCoeff() == 1.0);
            CHECK(view.maxCoeff() == 1.0);
        } else {
            const double limit =
                std::sqrt(6.0 / static_cast<double>(slice.rows + slice.cols));
            CHECK(view.cwiseAbs().maxCoeff() <= limit);
            CHECK(view.cwiseAbs().maxCoeff() > 0.0);
        }
    }
}

TEST_CASE("attention weights are row-stochastic") {
    Rng rng(21);
    Eigen::MatrixXd q(7, 4), k(7, 4), v(7, 4);
    for (auto* m : {&q, &k, &v})
        for (long c = 0; c < 4; ++c)
            for (long r = 0; r < 7; ++r) (*m)(r, c) = 3.0 * rng.next_gaussian();
    Eigen::MatrixXd probs;
    const Eigen::MatrixXd out = attention(q, k, v, &probs);
    CHECK(out.rows() == 7);
    CHECK(out.cols() == 4);
    REQUIRE(probs.rows() == 7);
    REQUIRE(probs.cols() == 7);
    CHECK(probs.minCoeff() >= 0.0);
    for (long r = 0; r < probs.rows(); ++r)
        CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("token order does not change the prediction") {
    const ModelArch arch = ModelArch::make(16, 2, 2);
    const Model model = init_model(arch, 31);
    const FeatureStack stack = random_stack(7, 16, MurmurClass::Diamond);
    const Eigen::MatrixXd g = tokenize(stack, model);
    REQUIRE(g.rows() == arch.total_tokens());
    const Eigen::VectorXd base = forward_from_tokens(g, model);

    Eigen::MatrixXd reversed(g.rows(), g.cols());
    for (long r = 0; r < g.rows(); ++r) reversed.row(g.rows() - 1 - r) = g.row(r);
    const Eigen::VectorXd swapped = forward_from_tokens(reversed, model);
    CHECK((base - swapped).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("probabilities are a proper distribution") {
    const ModelArch arch = ModelArch::make(16, 2, 2);
    const Model model = init_model(arch, 41);
    const FeatureStack stack = random_stack(8, 16, MurmurClass::Plateau);
    const Eigen::VectorXd probs = forward(stack, model);
    REQUIRE(probs.size() == kNumClasses);
    CHECK(probs.minCoeff() > 0.0);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-12);
}

TEST_CASE("a zeroed head yields uniform probabilities and ln 4 loss") {
    const ModelArch arch = ModelArch::make(16, 2, 2);
    Model model = init_model(arch, 51);
    model.view(model.layout.head_w).setZero();
    model.view(model.layout.head_b).setZero();

    const FeatureStack stack = random_stack(9, 16, MurmurClass::Crescendo);
    const auto [cls, probs] = predict(stack, model);
    CHECK(cls == 0);  // exact tie resolves to the lowest class
    for (int c = 0; c < kNumClasses; ++c)
        CHECK(std::abs(probs[c] - 0.25) < 1e-12);

    std::vector<const FeatureStack*> batch = {&stack};
    CHECK(std::abs(batch_loss(batch, model) - std::log(4.0)) < 1e-9);
}

TEST_CASE("analytic gradients match central finite differences") {
    const ModelArch arch = ModelArch::make(16, 2, 2);
    Model model = init_model(arch, 61);
    const std::vector<FeatureStack> stacks = {
        random_stack(100, 16, MurmurClass::Diamond),
        random_stack(101, 16, MurmurClass::Plateau),
        random_stack(102, 16, MurmurClass::Crescendo)};
    std::vector<const FeatureStack*> batch;
    for (const auto& s : stacks) batch.push_back(&s);

    Eigen::VectorXd grads;
    const double loss = loss_and_grads(batch, model, grads);
    CHECK(std::abs(batch_loss(batch, model) - loss) < 1e-12);
    REQUIRE(grads.size() == model.params.size());

    const double h = 1e-5;
    double worst = 0.0;
    long worst_i = -1;
    for (long i = 0; i < model.params.size(); ++i) {
        const double saved = model.params[i];
        model.params[i] = saved + h;
        const double up = batch_loss(batch, model);
        model.params[i] = saved - h;
        const double down = batch_loss(batch, model);
        model.params[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(grads[i] - fd) /
                           std::max(1e-4, std::abs(grads[i]) + std::abs(fd));
        if (rel > worst) {
            worst = rel;
            worst_i = i;
        }
    }
    CAPTURE(worst_i);
    CHECK(worst < 1e-4);
}

TEST_CASE("training is deterministic in the seed") {
    const ModelArch arch = ModelArch::make(16, 2, 2);
    std::vector<FeatureStack> stacks;
    for (int i = 0; i < 12; ++i)
        stacks.push_back(random_stack(200 + i, 16, static_cast<MurmurClass>(i % 4)));
    std::vector<const FeatureStack*> ptrs;
    for (const auto& s : stacks) ptrs.push_back(&s);

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 5;
    cfg.seed = 77;
    const Model a = train(ptrs, {}, arch, cfg);
    const Model b = train(ptrs, {}, arch, cfg);
    CHECK(a.params == b.params);
    cfg.seed = 78;
    const Model c = train(ptrs, {}, arch, cfg);
    CHECK(a.params != c.params);
}

TEST_CASE("training separates clearly marked classes") {
    const ModelArch arch = ModelArch::make(16, 2, 4);
    std::vector<FeatureStack> stacks;
    for (int i = 0; i < 48; ++i) stacks.push_back(class_marked_stack(300 + i, i % 4));
    std::vector<const FeatureStack*> ptrs;
    for (const auto& s : stacks) ptrs.push_back(&s);

    TrainConfig cfg;
    cfg.epochs = 80;
    cfg.batch_size = 16;
    cfg.lr = 0.05;
    cfg.seed = 5;
    std::vector<EpochStats> history;
    const Model model = train(ptrs, {}, arch, cfg, &history);
    REQUIRE(history.size() == 80);
    CHECK(history.front().train_loss > history.back().train_loss);

    long correct = 0;
    for (const auto& s : stacks)
        if (predict(s, model).first == static_cast<int>(*s.label)) ++correct;
    CHECK(correct >= 43);  // at least 90 percent
}

TEST_CASE("shape and label violations are reported") {
    const ModelArch arch = ModelArch::make(16, 2, 2);
    const Model model = init_model(arch, 91);

    FeatureStack bad = random_stack(400, 16, MurmurClass::Diamond);
    bad.matrices[1].resize(2, 2);
    CHECK_THROWS_AS(forward(bad, model), DimError);

    FeatureStack fewer = random_stack(401, 16, MurmurClass::Diamond);
    fewer.matrices.pop_back();
    CHECK_THROWS_AS(forward(fewer, model), DimError);

    FeatureStack unlabeled = random_stack(402, 16, std::nullopt);
    std::vector<const FeatureStack*> batch = {&unlabeled};
    CHECK_THROWS_AS(batch_loss(batch, model), InvalidLabel);
    CHECK_THROWS_AS(train({}, {}, arch, TrainConfig{}), EmptyInput);
}
