// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dait/data.hpp"
#include "dait/encoders.hpp"
#include "oracles.hpp"

using namespace dait;
using namespace dait::test;

namespace {

Tensor batch_images(const Dataset& ds, std::int64_t count, std::int64_t side) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < count; ++i) idx.push_back(i % ds.size());
    return batch_to_tensor(ds, idx, AugmentPolicy::eval_default(side), 0);
}

DatasetPair fixture() {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.per_class = 20;
    spec.image_side = 16;
    spec.seed = 7;
    return generate_synthetic(spec);
}

}  // namespace

TEST_CASE("toy VLM image encoder: shape, determinism, orthonormal projection") {
    const auto pair = fixture();
    ToyVlmImageEncoder vlm(3 * 16 * 16, 48, 11);
    const Tensor x = batch_images(pair.train, 5, 16);
    const Tensor z1 = vlm.encode_raw(x);
    const Tensor z2 = vlm.encode_raw(x);
    CHECK(z1.shape() == std::vector<std::int64_t>{5, 48});
    CHECK(z1.vec() == z2.vec());  // byte-stable across calls

    // Projection rows are orthonormal.
    const NamedParams params = vlm.params();
    const Tensor& q = params[0].second->value;
    for (std::int64_t i = 0; i < q.dim(0); ++i)
        for (std::int64_t j = 0; j <= i; ++j) {
            double dot = 0.0;
            for (std::int64_t k = 0; k < q.dim(1); ++k) dot += q.at2(i, k) * q.at2(j, k);
            CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-9);
        }

    CHECK_THROWS_AS(ToyVlmImageEncoder(16, 48, 11), ConfigError);  // raw_dim > input_dim
}

TEST_CASE("toy VLM separates fixture classes: class-mean cosine separation above 0.5") {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.per_class = 100;
    spec.image_side = 32;
    spec.separation = 1.0;
    spec.seed = 7;
    const auto pair = generate_synthetic(spec);
    ToyVlmImageEncoder vlm(3 * 32 * 32, 256, 11);

    std::vector<std::int64_t> all;
    for (std::int64_t i = 0; i < pair.train.size(); ++i) all.push_back(i);
    const Tensor z = vlm.encode_raw(batch_to_tensor(pair.train, all, AugmentPolicy::eval_default(32), 0));
    Tensor means({4, z.dim(1)});
    std::vector<std::int64_t> counts(4, 0);
    for (std::int64_t i = 0; i < z.dim(0); ++i) {
        const std::int64_t c = pair.train.items[static_cast<std::size_t>(i)].label;
        ++counts[static_cast<std::size_t>(c)];
        for (std::int64_t j = 0; j < z.dim(1); ++j) means.at2(c, j) += z.at2(i, j);
    }
    for (std::int64_t c = 0; c < 4; ++c)
        for (std::int64_t j = 0; j < z.dim(1); ++j) means.at2(c, j) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    for (std::int64_t a = 0; a < 4; ++a)
        for (std::int64_t b = a + 1; b < 4; ++b) {
            std::vector<double> va, vb;
            for (std::int64_t j = 0; j < means.dim(1); ++j) {
                va.push_back(means.at2(a, j));
                vb.push_back(means.at2(b, j));
            }
            CHECK(1.0 - oracle_cosine(va, vb) > 0.5);
        }
}

TEST_CASE("toy text encoder: exact pairwise cosine, determinism, distinct rows") {
    ToyVlmTextEncoder text(32, 0.25, 12);
    const std::vector<std::string> classes{"a", "b", "c"};
    const Tensor t1 = text.encode_raw(classes, "a photo of a {}");
    const Tensor t2 = text.encode_raw(classes, "a photo of a {}");
    CHECK(t1.vec() == t2.vec());
    CHECK(t1.shape() == std::vector<std::int64_t>{3, 32});
    for (std::int64_t i = 0; i < 3; ++i)
        for (std::int64_t j = 0; j < 3; ++j) {
            std::vector<double> vi, vj;
            for (std::int64_t k = 0; k < 32; ++k) {
                vi.push_back(t1.at2(i, k));
                vj.push_back(t1.at2(j, k));
            }
            const double want = (i == j) ? 1.0 : 0.25;
            CHECK(oracle_cosine(vi, vj) == doctest::Approx(want).epsilon(1e-9));
        }
}

TEST_CASE("toy text encoder rejects bad templates and tight raw dims") {
    ToyVlmTextEncoder text(8, 0.0, 12);
    CHECK_THROWS_AS(text.encode_raw({"a"}, "no placeholder"), ConfigError);
    CHECK_THROWS_AS(text.encode_raw({"a"}, "two {} holes {}"), ConfigError);
    std::vector<std::string> many;
    for (int i = 0; i < 8; ++i) many.push_back("c" + std::to_string(i));
    CHECK_THROWS_AS(text.encode_raw(many, "{}"), ConfigError);  // needs N+1 <= raw_dim
    CHECK_THROWS_AS(ToyVlmTextEncoder(8, 1.0, 12), ConfigError);
    CHECK_THROWS_AS(ToyVlmTextEncoder(8, -0.1, 12), ConfigError);
}

TEST_CASE("prompt expansion substitutes the class name") {
    const auto prompts = ToyVlmTextEncoder::expand_prompts({"wren", "owl"}, "a photo of a {}");
    CHECK(prompts == std::vector<std::string>{"a photo of a wren", "a photo of a owl"});
}

TEST_CASE("vlm_encode_image / vlm_encode_text compose with f_vlm") {
    const auto pair = fixture();
    ToyVlmImageEncoder vlm(3 * 16 * 16, 48, 11);
    ToyVlmTextEncoder text(48, 0.0, 12);
    Rng rng(1);
    Mlp2 f_vlm = Mlp2::create(48, 32, 24, rng);

    const FeatureBatch z = vlm_encode_image(vlm, f_vlm, batch_images(pair.train, 6, 16));
    CHECK(z.values.shape() == std::vector<std::int64_t>{6, 24});

    const ClassAnchors anchors = vlm_encode_text(text, f_vlm, pair.train.class_names, "a photo of a {}");
    CHECK(anchors.values.shape() == std::vector<std::int64_t>{4, 24});
    CHECK(anchors.prompts[2] == "a photo of a class_2");
    const ClassAnchors again = vlm_encode_text(text, f_vlm, pair.train.class_names, "a photo of a {}");
    CHECK(anchors.values.vec() == again.values.vec());
}

TEST_CASE("intermediate forward: shapes and constant-map pooling identity") {
    const auto pair = fixture();
    ToyConvEncoder enc(3, {8, 16}, 24, 4, 13);
    const Tensor x = batch_images(pair.train, 3, 16);
    const ConvForwardConst fw = enc.forward(x);
    CHECK(fw.map.shape() == std::vector<std::int64_t>{3, 16, 4, 4});
    CHECK(fw.pooled.shape() == std::vector<std::int64_t>{3, 24});
    CHECK(fw.logits.shape() == std::vector<std::int64_t>{3, 4});

    Tensor constant_map = Tensor::full({2, 5, 3, 3}, 0.7);
    const Tensor pooled = global_avg_pool_forward(constant_map);
    for (std::int64_t i = 0; i < pooled.numel(); ++i) CHECK(pooled[i] == doctest::Approx(0.7));

    // Graph path and const path agree.
    const ConvForward fw_var = enc.forward(make_constant(x));
    CHECK(fw_var.logits->value.vec() == fw.logits.vec());
}

TEST_CASE("student alignment head: channel contract and identity initialization") {
    ToyConvEncoder student(3, {4, 8}, 16, 4, 14);
    CHECK_THROWS_AS(student.aligned_map(Tensor::zeros({1, 8, 4, 4})), ContractError);  // not configured

    student.add_align_head(8, 21);  // equal channels -> identity init
    const Tensor map = test::random_tensor({2, 8, 4, 4}, *[] { static Rng r(3); return &r; }());
    const Tensor aligned = student.aligned_map(map);
    for (std::int64_t i = 0; i < map.numel(); ++i) CHECK(aligned[i] == doctest::Approx(map[i]).epsilon(1e-12));

    ToyConvEncoder student2(3, {4, 8}, 16, 4, 14);
    student2.add_align_head(24, 22);
    const Tensor aligned2 = student2.aligned_map(map);
    CHECK(aligned2.shape() == std::vector<std::int64_t>{2, 24, 4, 4});
}

TEST_CASE("sra between student and intermediate maps is finite and positive at init") {
    const auto pair = fixture();
    ToyConvEncoder intermediate(3, {8, 16, 32}, 24, 4, 13);
    ToyConvEncoder student(3, {4, 8}, 24, 4, 14);
    student.add_align_head(intermediate.out_channels(), 14);
    const Tensor x = batch_images(pair.train, 4, 16);
    const Tensor tmap = intermediate.forward(x).map;
    const Tensor smap = student.aligned_map(student.forward(x).map);
    auto [s, t] = harmonize_maps(smap, tmap);
    CHECK(s.shape() == t.shape());
    CHECK(s.dim(2) == std::min(smap.dim(2), tmap.dim(2)));
    const double loss = sra_loss(FeatureMap{s}, FeatureMap{t});
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
}

TEST_CASE("trainability registry: freeze contract under optimizer steps") {
    Rng rng(5);
    ToyConvEncoder enc(3, {4}, 8, 3, 99);
    ToyConvEncoder other(3, {4}, 8, 3, 98);

    TrainabilityRegistry reg;
    reg.register_group("frozen_enc", enc.params());
    reg.register_group("live_enc", other.params());
    reg.set_trainability({{"frozen_enc", false}, {"live_enc", true}});
    CHECK_FALSE(reg.is_trainable("frozen_enc"));
    CHECK(reg.is_trainable("live_enc"));
    CHECK_THROWS_AS(reg.set_trainability({{"nope", true}}), ConfigError);
    CHECK_THROWS_AS(reg.assert_frozen("nope"), ConfigError);

    AdamWConfig cfg;
    cfg.lr = 0.05;
    AdamW opt(reg.trainable_params(), cfg);

    const Tensor x = test::random_tensor({4, 3, 8, 8}, rng);
    const LabelBatch labels{{0, 1, 2, 0}};
    for (int step = 0; step < 3; ++step) {
        opt.zero_grad();
        Var loss_frozen = cls_loss(enc.forward(make_constant(x)).logits, labels);
        Var loss_live = cls_loss(other.forward(make_constant(x)).logits, labels);
        Var total = vadd(loss_frozen, loss_live);
        backward(total);
        // Gradient-norm precondition: the live group really has signal.
        double gnorm = 0.0;
        for (const auto& [name, var] : other.params())
            if (var->has_grad())
                for (std::int64_t i = 0; i < var->grad.numel(); ++i) gnorm += var->grad[i] * var->grad[i];
        CHECK(gnorm > 0.0);
        opt.step();
    }
    CHECK(reg.assert_frozen("frozen_enc"));          // bit-identical
    CHECK_FALSE(reg.assert_frozen("live_enc"));      // changed (was never frozen)
    CHECK(reg.checksum("frozen_enc") == params_checksum(enc.params()));
}

TEST_CASE("fit_projection_head: epochs=0 identity, descent, nearest-anchor improvement") {
    const auto pair = fixture();
    ToyVlmImageEncoder vlm(3 * 16 * 16, 64, 11);
    ToyVlmTextEncoder text(64, 0.0, 12);
    std::vector<std::int64_t> all;
    for (std::int64_t i = 0; i < pair.train.size(); ++i) all.push_back(i);
    const Tensor features = vlm.encode_raw(batch_to_tensor(pair.train, all, AugmentPolicy::eval_default(16), 0));
    const Tensor anchors = text.encode_raw(pair.train.class_names, "{}");
    const LabelBatch labels{pair.train.labels()};

    ProjectionFitConfig cfg;
    cfg.hidden = 32;
    cfg.out_dim = 16;
    cfg.seed = 4;

    const auto zero = fit_projection_head(features, anchors, labels, 0, cfg);
    CHECK(zero.epoch_losses.empty());
    Rng ref_rng(mix_seed(cfg.seed, 0x555));
    Mlp2 fresh = Mlp2::create(features.dim(1), cfg.hidden, cfg.out_dim, ref_rng);
    NamedParams a, b;
    zero.head.collect(a, "h");
    fresh.collect(b, "h");
    CHECK(params_checksum(a) == params_checksum(b));  // untouched initialization

    const auto fit = fit_projection_head(features, anchors, labels, 40, cfg);
    CHECK(fit.epoch_losses.back() < fit.epoch_losses.front());
    for (std::size_t i = 1; i < fit.epoch_losses.size(); ++i)
        CHECK(fit.epoch_losses[i] <= fit.epoch_losses[i - 1] * 1.05 + 1e-6);  // non-increasing within tolerance

    const auto nearest_anchor = [&](const Mlp2& head) {
        const Tensor z = head.forward(features);
        const Tensor t = head.forward(anchors);
        const Tensor cos = oracle_cosine_matrix(z, t);
        std::int64_t correct = 0;
        for (std::int64_t i = 0; i < cos.dim(0); ++i) {
            std::int64_t arg = 0;
            for (std::int64_t j = 1; j < cos.dim(1); ++j)
                if (cos.at2(i, j) > cos.at2(i, arg)) arg = j;
            correct += arg == labels.indices[static_cast<std::size_t>(i)] ? 1 : 0;
        }
        return static_cast<double>(correct) / static_cast<double>(cos.dim(0));
    };
    CHECK(nearest_anchor(fit.head) >= nearest_anchor(zero.head));
    CHECK(fit.info.kind == ProjectionHeadInfo::Kind::two_layer_nonlinear);
}

TEST_CASE("fit_projection_head: divergence is reported as a training error") {
    const auto pair = fixture();
    ToyVlmImageEncoder vlm(3 * 16 * 16, 32, 11);
    ToyVlmTextEncoder text(32, 0.0, 12);
    std::vector<std::int64_t> all{0, 1, 2, 3};
    const Tensor features = vlm.encode_raw(batch_to_tensor(pair.train, all, AugmentPolicy::eval_default(16), 0));
    const Tensor anchors = text.encode_raw(pair.train.class_names, "{}");
    const LabelBatch labels{batch_labels(pair.train, all)};
    ProjectionFitConfig cfg;
    cfg.hidden = 16;
    cfg.out_dim = 8;
    cfg.lr = 1e18;  // guaranteed blow-up
    CHECK_THROWS_AS(fit_projection_head(features, anchors, labels, 50, cfg), TrainingError);
}

TEST_CASE("harmonize_maps pools both inputs to the smaller grid") {
    Rng rng(23);
    const Tensor a = test::random_tensor({2, 4, 8, 8}, rng);
    const Tensor b = test::random_tensor({2, 4, 4, 4}, rng);
    auto [ha, hb] = harmonize_maps(a, b);
    CHECK(ha.shape() == std::vector<std::int64_t>{2, 4, 4, 4});
    CHECK(hb.vec() == b.vec());  // already at the target grid
    CHECK_THROWS_AS(harmonize_maps(a, test::random_tensor({2, 5, 4, 4}, rng)), ContractError);
}

TEST_CASE("external adapter requests fail loudly without a registered backend") {
    EncoderSpec spec;
    spec.role = EncoderRole::vlm_image;
    spec.kind = EncoderKind::external_adapter;
    spec.adapter = "openclip-convnext";
    CHECK_THROWS_WITH_AS(make_vlm_image_backend(spec, 3 * 32 * 32), doctest::Contains("openclip-convnext"),
                         BackendError);

    // A registered adapter is honored.
    register_vlm_image_adapter("unit-test-adapter", [](const EncoderSpec& s, std::int64_t input_dim) {
        return std::make_unique<ToyVlmImageEncoder>(input_dim, s.raw_dim, s.seed);
    });
    spec.adapter = "unit-test-adapter";
    spec.raw_dim = 16;
    auto backend = make_vlm_image_backend(spec, 3 * 8 * 8);
    CHECK(backend->raw_dim() == 16);
}
