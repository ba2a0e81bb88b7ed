// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include <gtest/gtest.h>

#include <jamsense/checkpoint.hpp>
#include <jamsense/mhdnn.hpp>

using namespace jamsense;
using namespace jamsense::nn;
using dataset::WindowSample;

namespace {

ArchConfig arch(Variant v, std::size_t w) {
    ArchConfig a;
    a.variant = v;
    a.w = w;
    return a;
}

WindowSample random_sample(std::size_t w, bool attack, Rng& rng) {
    WindowSample s;
    s.attack = attack;
    for (std::size_t i = 0; i < w; ++i) {
        s.rssi.push_back(rng.normal() + (attack ? 1.0 : -1.0));
        s.sinr.push_back(rng.normal() - (attack ? 1.0 : -1.0));
    }
    return s;
}

std::vector<WindowSample> toy_set(std::size_t n, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<WindowSample> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(random_sample(w, i % 2 == 0, rng));
    return v;
}

void expect_same_params(const Model& a, const Model& b) {
    ASSERT_EQ(a.params.size(), b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        EXPECT_EQ(a.params[i].name, b.params[i].name);
        EXPECT_EQ(a.params[i].value, b.params[i].value) << a.params[i].name;
    }
}

class BothVariants : public ::testing::TestWithParam<Variant> {};

}  // namespace

TEST(Arch, VariantParsing) {
    EXPECT_EQ(parse_variant("attention"), Variant::Attention);
    EXPECT_EQ(parse_variant("lstm"), Variant::Lstm);
    EXPECT_THROW(parse_variant("gru"), ConfigError);
}

TEST(Arch, ShortWindowRejected) {
    EXPECT_THROW(arch(Variant::Attention, 10).validate(), ConfigError);
    EXPECT_NO_THROW(arch(Variant::Attention, 50).validate());
}

TEST(Arch, JsonRoundTrip) {
    const auto a = arch(Variant::Lstm, 200);
    const nlohmann::json j = a;
    EXPECT_EQ(j.get<ArchConfig>(), a);
}

TEST_P(BothVariants, ParameterCountIndependentOfWindow) {
    const auto n = parameter_count(arch(GetParam(), 300));
    EXPECT_LT(n, kMaxTrainableParameters);
    for (std::size_t w : {50, 100, 200}) EXPECT_EQ(parameter_count(arch(GetParam(), w)), n);
}

TEST_P(BothVariants, ProbabilitiesSumToOne) {
    const auto m = build_mhdnn(arch(GetParam(), 100), 3);
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const auto p = forward(m, random_sample(100, i % 2, rng));
        EXPECT_GE(p[0], 0.0);
        EXPECT_GE(p[1], 0.0);
        EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    }
}

TEST_P(BothVariants, InitialisationDeterministic) {
    expect_same_params(build_mhdnn(arch(GetParam(), 100), 9), build_mhdnn(arch(GetParam(), 100), 9));
    EXPECT_NE(build_mhdnn(arch(GetParam(), 100), 9).params[0].value,
              build_mhdnn(arch(GetParam(), 100), 10).params[0].value);
}

TEST_P(BothVariants, WrongWindowLengthRejected) {
    const auto m = build_mhdnn(arch(GetParam(), 100), 1);
    Rng rng(2);
    EXPECT_THROW(forward(m, random_sample(99, true, rng)), ShapeError);
}

TEST_P(BothVariants, GradientCheck) {
    const auto m = build_mhdnn(arch(GetParam(), 50), 5);
    Rng rng(6);
    for (bool attack : {true, false}) {
        const auto rep = grad_check(m, random_sample(50, attack, rng));
        EXPECT_GE(rep.coordinates, 200u);
        EXPECT_LT(rep.max_relative_error, 1e-4) << rep.worst_parameter;
    }
}

TEST_P(BothVariants, TrainingIsDeterministicAndLearns) {
    const auto data = toy_set(64, 50, 7);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 8;
    cfg.threads = 1;
    auto a = build_mhdnn(arch(GetParam(), 50), 1);
    auto b = a;
    const auto ra = train(a, data, cfg);
    cfg.threads = 3;
    const auto rb = train(b, data, cfg);
    EXPECT_EQ(ra.loss_curve, rb.loss_curve);
    expect_same_params(a, b);
    ASSERT_EQ(ra.loss_curve.size(), 6u);
    EXPECT_LT(ra.loss_curve.back(), ra.loss_curve.front());
}

INSTANTIATE_TEST_SUITE_P(Mhdnn, BothVariants, ::testing::Values(Variant::Attention, Variant::Lstm),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Train, RejectsBadConfig) {
    auto m = build_mhdnn(arch(Variant::Lstm, 50), 1);
    TrainConfig cfg;
    cfg.learning_rate = 0;
    EXPECT_THROW(train(m, toy_set(4, 50, 1), cfg), ConfigError);
    EXPECT_THROW(train(m, {}, TrainConfig{}), DomainError);
}

TEST(Train, DivergenceReported) {
    auto m = build_mhdnn(arch(Variant::Lstm, 50), 1);
    TrainConfig cfg;
    cfg.learning_rate = 1e200;
    cfg.epochs = 5;
    EXPECT_THROW(train(m, toy_set(32, 50, 1), cfg), TrainingError);
}

TEST(Checkpoint, ModelRoundTripIsExact) {
    const auto m = build_mhdnn(arch(Variant::Attention, 100), 12);
    const dataset::NormStats norm{-71.5, 3.25, 9.0, 4.5};
    std::stringstream ss;
    ckpt::write_checkpoint(ss, ckpt::to_checkpoint(m, norm));
    const auto back = ckpt::mhdnn_from_checkpoint(ckpt::read_checkpoint(ss));
    expect_same_params(m, back.model);
    EXPECT_EQ(back.model.arch, m.arch);
    EXPECT_EQ(back.norm, norm);
    Rng rng(1);
    const auto s = random_sample(100, true, rng);
    EXPECT_EQ(forward(m, s), forward(back.model, s));
}

TEST(Checkpoint, CorruptionDetected) {
    const auto m = build_mhdnn(arch(Variant::Lstm, 50), 2);
    std::stringstream ss;
    ckpt::write_checkpoint(ss, ckpt::to_checkpoint(m, {}));
    const std::string good = ss.str();

    std::string flipped = good;
    flipped[flipped.size() - 3] ^= 0x10;
    std::stringstream a(flipped);
    EXPECT_THROW(ckpt::read_checkpoint(a), ParseError);

    std::stringstream b(good.substr(0, good.size() - 8));
    EXPECT_THROW(ckpt::read_checkpoint(b), ParseError);

    std::stringstream c("NOT-A-CHECKPOINT");
    EXPECT_THROW(ckpt::read_checkpoint(c), ParseError);

    std::stringstream d(good + "x");
    EXPECT_THROW(ckpt::read_checkpoint(d), ParseError);
}

TEST(Checkpoint, WrongTypeRejected) {
    ckpt::Checkpoint c{"gnb", nlohmann::json::object(), {}};
    EXPECT_THROW(ckpt::mhdnn_from_checkpoint(c), ParseError);
}
