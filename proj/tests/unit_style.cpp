#include <doctest.h>

#include "hwgen/style_ops.hpp"
#include "hwgen/toydata.hpp"
#include "test_util.hpp"

using namespace hwgen;
using hwgen::test::MicroBackbone;

namespace {
VarPtr row(std::vector<float> v) {
    const int d = int(v.size());
    return constant(Tensor({1, d}, std::move(v)));
}
}  // namespace

TEST_CASE("triplet_loss: degenerate triple returns the margin") {
    VarPtr f = row({0.3f, -0.7f});
    CHECK(triplet_loss(f, f, f, 0.8f, 2.f)->scalar() == doctest::Approx(0.8f));
}

TEST_CASE("triplet_loss: satisfied margin clamps to zero") {
    VarPtr a = row({0.f, 0.f});
    VarPtr n = row({2.f, 0.f});
    CHECK(triplet_loss(a, a, n, 1.f, 2.f)->scalar() == doctest::Approx(0.f));
}

TEST_CASE("triplet_loss: violated margin keeps the hinge value") {
    VarPtr a = row({0.f, 0.f});
    VarPtr p = row({3.f, 0.f});  // delta+ = 3
    VarPtr n = row({1.f, 0.f});  // delta- = 1
    CHECK(triplet_loss(a, p, n, 1.f, 2.f)->scalar() == doctest::Approx(3.f));
}

TEST_CASE("triplet_loss: non-negative and zero iff margin satisfied, any p") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const float p = trial % 2 == 0 ? 2.f : 3.f;
        const float margin = float(rng.uniform(0.0, 2.0));
        Tensor ta = Tensor::randn({1, 4}, rng), tp = Tensor::randn({1, 4}, rng),
               tn = Tensor::randn({1, 4}, rng);
        VarPtr a = constant(ta), pp = constant(tp), nn = constant(tn);
        const double loss = triplet_loss(a, pp, nn, margin, p)->scalar();
        CHECK(loss >= 0.0);
        const double dp = p_distance(a, pp, p)->scalar();
        const double dn = p_distance(a, nn, p)->scalar();
        if (dn >= dp + margin)
            CHECK(loss == doctest::Approx(0.0));
        else
            CHECK(loss == doctest::Approx(dp - dn + margin).epsilon(1e-5));
    }
    VarPtr bad = row({1.f, 2.f, 3.f});
    CHECK_THROWS_AS(triplet_loss(row({1.f, 2.f}), bad, bad, 1.f, 2.f), NumericError);
}

namespace {
TripletBatch controlled_batch() {
    // anchors/positives identical blank pages; negatives solid ink, so the
    // MicroBackbone puts them far apart
    TripletBatch b;
    Raster bg(kCanonH, kCanonW, 1.f);
    Raster ink(kCanonH, kCanonW, 0.f);
    for (int i = 0; i < 4; ++i) {
        b.anchors.push_back(bg);
        b.positives.push_back(bg);
        b.negatives.push_back(ink);
        b.anchor_writer_ids.push_back("w" + std::to_string(i % 4));
    }
    return b;
}

StyleEncoderModel micro_model(int n_writers) {
    StyleEncoderModel m;
    m.backbone = std::make_shared<MicroBackbone>();
    m.d = 2;
    Rng rng(1);
    m.classifier = Linear(2, n_writers, rng);
    std::fill(m.classifier.W->val.v.begin(), m.classifier.W->val.v.end(), 0.f);
    std::fill(m.classifier.b->val.v.begin(), m.classifier.b->val.v.end(), 0.f);
    for (int i = 0; i < n_writers; ++i) m.writers.push_back("w" + std::to_string(i));
    return m;
}
}  // namespace

TEST_CASE("hybrid_loss: uniform classifier and satisfied triplet give ln 4") {
    StyleEncoderModel m = micro_model(4);
    HybridLossTerms t = hybrid_loss(controlled_batch(), m, 1.f, 2.f);
    CHECK(t.triplet_term == doctest::Approx(0.0));
    CHECK(t.class_term == doctest::Approx(std::log(4.0)).epsilon(1e-6));
    CHECK(t.total->scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("hybrid_loss: total equals class term plus triplet term") {
    Rng rng(9);
    StyleEncoderModel m = micro_model(4);
    // random classifier so both terms are non-trivial
    m.classifier = Linear(2, 4, rng);
    TripletBatch b = controlled_batch();
    b.positives[1].at(3, 3) = 0.5f;  // perturb to make the triplet term move
    HybridLossTerms t = hybrid_loss(b, m, 1.f, 2.f);
    CHECK(t.total->scalar() ==
          doctest::Approx(t.class_term + t.triplet_term).epsilon(1e-6));
}

TEST_CASE("hybrid_loss: unknown writer label rejected") {
    StyleEncoderModel m = micro_model(2);
    TripletBatch b = controlled_batch();  // labels w0..w3
    CHECK_THROWS_AS(hybrid_loss(b, m, 1.f, 2.f), DataError);
}

TEST_CASE("hybrid_loss variants drop the other term") {
    StyleEncoderModel m = micro_model(4);
    TripletBatch b = controlled_batch();
    HybridLossTerms co = hybrid_loss(b, m, 1.f, 2.f, LossVariant::ClassOnly);
    CHECK(co.triplet_term == 0.0);
    CHECK(co.total->scalar() == doctest::Approx(co.class_term));
    HybridLossTerms to = hybrid_loss(b, m, 1.f, 2.f, LossVariant::TripletOnly);
    CHECK(to.class_term == 0.0);
    CHECK(to.total->scalar() == doctest::Approx(to.triplet_term));
    CHECK(parse_loss_variant("hybrid") == LossVariant::Hybrid);
    CHECK_THROWS_AS(parse_loss_variant("both"), ConfigError);
}

TEST_CASE("hybrid_loss gradient matches finite differences on the 3-parameter backbone") {
    auto backbone = std::make_shared<MicroBackbone>();
    StyleEncoderModel m;
    m.backbone = backbone;
    m.d = 2;
    Rng rng(4);
    m.classifier = Linear(2, 3, rng);
    m.writers = {"w0", "w1", "w2"};

    TripletBatch b;
    Rng img_rng(5);
    for (int i = 0; i < 3; ++i) {
        auto make = [&] {
            Raster r(kCanonH, kCanonW, 1.f);
            for (int k = 0; k < 200; ++k)
                r.at(int(img_rng.next_below(kCanonH)), int(img_rng.next_below(kCanonW))) =
                    float(img_rng.uniform());
            return r;
        };
        b.anchors.push_back(make());
        b.positives.push_back(make());
        b.negatives.push_back(make());
        b.anchor_writer_ids.push_back("w" + std::to_string(i));
    }
    std::vector<VarPtr> params = {backbone->w, m.classifier.W, m.classifier.b};
    const double err =
        hwgen::test::gradcheck([&] { return hybrid_loss(b, m, 1.f, 2.f).total; }, params);
    CHECK(err < 1e-3);
}

TEST_CASE("toy style encoder training: loss decreases, deterministic, variants train") {
    const std::string dir = hwgen::test::scratch_dir("style_train");
    ToyCorpusConfig tcfg;
    tcfg.writers = 2;
    tcfg.train_words_per_writer = 6;
    tcfg.test_words_per_writer = 1;
    tcfg.include_unseen_writer = false;
    DatasetManifest manifest = load_manifest(make_toy_corpus(dir, tcfg));

    StyleTrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 6;
    cfg.widths = {4, 8};
    cfg.d = 8;
    cfg.lr = 2e-3;
    cfg.seed = 11;
    StyleTrainResult r1 = train_style_encoder(manifest, cfg);
    REQUIRE_FALSE(r1.aborted_non_finite);
    REQUIRE(r1.epoch_loss.size() == 4);
    CHECK(r1.epoch_loss.back() < r1.epoch_loss.front());

    StyleTrainResult r2 = train_style_encoder(manifest, cfg);
    CHECK(std::abs(r1.epoch_loss.back() - r2.epoch_loss.back()) < 1e-5);

    cfg.variant = LossVariant::ClassOnly;
    StyleTrainResult rc = train_style_encoder(manifest, cfg);
    CHECK(rc.epoch_triplet.back() == 0.0);
    cfg.variant = LossVariant::TripletOnly;
    StyleTrainResult rt = train_style_encoder(manifest, cfg);
    CHECK(rt.epoch_class.back() == 0.0);
    CHECK(std::isfinite(rt.epoch_loss.back()));
}

TEST_CASE("embed_style: deterministic, finite on blank input, shape-checked") {
    auto backbone = std::make_shared<MicroBackbone>();
    StyleEncoderModel m;
    m.backbone = backbone;
    m.d = 2;
    Raster img(kCanonH, kCanonW, 1.f);
    StyleEmbedding a = embed_style(m, img);
    StyleEmbedding b = embed_style(m, img);
    CHECK(a.values.v == b.values.v);
    CHECK(a.provenance == Provenance::Single);
    CHECK(a.values.all_finite());
    Raster odd(10, 10, 0.f);
    CHECK_THROWS_AS(embed_style(m, odd), DataError);
}

TEST_CASE("aggregate_exemplars: mean, singleton identity, permutation invariance") {
    StyleEmbedding e1{Tensor({2}, {1.f, 3.f}), Provenance::Single};
    StyleEmbedding e2{Tensor({2}, {3.f, 1.f}), Provenance::Single};
    StyleEmbedding mean = aggregate_exemplars({e1, e2});
    CHECK(mean.values.v == std::vector<float>{2.f, 2.f});
    CHECK(mean.provenance == Provenance::AggregatedK);

    StyleEmbedding single = aggregate_exemplars({e1});
    CHECK(single.values.v == e1.values.v);

    Rng rng(7);
    std::vector<StyleEmbedding> many;
    for (int i = 0; i < 5; ++i)
        many.push_back({Tensor::randn({6}, rng), Provenance::Single});
    StyleEmbedding fwd = aggregate_exemplars(many);
    std::reverse(many.begin(), many.end());
    std::swap(many[1], many[3]);
    StyleEmbedding rev = aggregate_exemplars(many);
    for (int i = 0; i < 6; ++i)
        CHECK(fwd.values.v[size_t(i)] == doctest::Approx(rev.values.v[size_t(i)]).epsilon(1e-6));

    CHECK_THROWS_AS(aggregate_exemplars({}), DataError);
    StyleEmbedding odd{Tensor({3}), Provenance::Single};
    CHECK_THROWS_AS(aggregate_exemplars({e1, odd}), NumericError);
}

TEST_CASE("project_style: zero input, linearity, identity projector") {
    Rng rng(13);
    Linear proj(3, 4, rng);
    std::fill(proj.b->val.v.begin(), proj.b->val.v.end(), 0.f);

    StyleEmbedding zero{Tensor::zeros({3}), Provenance::Single};
    for (float v : project_style(zero, proj).values.v) CHECK(v == 0.f);

    StyleEmbedding x{Tensor::randn({3}, rng), Provenance::Single};
    StyleEmbedding y{Tensor::randn({3}, rng), Provenance::Single};
    const float a = 0.7f, b = -1.3f;
    StyleEmbedding combo{Tensor({3}), Provenance::Single};
    for (int i = 0; i < 3; ++i)
        combo.values.v[size_t(i)] = a * x.values.v[size_t(i)] + b * y.values.v[size_t(i)];
    StyleCondition pc = project_style(combo, proj);
    StyleCondition px = project_style(x, proj);
    StyleCondition py = project_style(y, proj);
    for (int i = 0; i < 4; ++i)
        CHECK(pc.values.v[size_t(i)] ==
              doctest::Approx(a * px.values.v[size_t(i)] + b * py.values.v[size_t(i)])
                  .epsilon(1e-4));

    Linear ident(3, 3, rng);
    std::fill(ident.W->val.v.begin(), ident.W->val.v.end(), 0.f);
    std::fill(ident.b->val.v.begin(), ident.b->val.v.end(), 0.f);
    for (int i = 0; i < 3; ++i) ident.W->val.at2(i, i) = 1.f;
    StyleCondition same = project_style(x, ident);
    CHECK(same.values.v == x.values.v);

    StyleEmbedding wrong{Tensor::zeros({5}), Provenance::Single};
    CHECK_THROWS_AS(project_style(wrong, proj), NumericError);
}

TEST_CASE("style ops: interpolation endpoints and midpoint arithmetic") {
    StyleEmbedding a{Tensor({2}, {0.f, 2.f}), Provenance::Single};
    StyleEmbedding b{Tensor({2}, {2.f, 0.f}), Provenance::Single};
    CHECK(interpolate_styles(a, b, 0.0).values.v == a.values.v);
    CHECK(interpolate_styles(a, b, 1.0).values.v == b.values.v);
    StyleEmbedding mid = interpolate_styles(a, b, 0.5);
    CHECK(mid.values.v == std::vector<float>{1.f, 1.f});
    CHECK(mid.provenance == Provenance::Interpolated);
    CHECK_THROWS_AS(interpolate_styles(a, b, 1.5), NumericError);
}

TEST_CASE("style ops: mixtures match interpolation and basis arithmetic") {
    StyleEmbedding a{Tensor({2}, {0.f, 2.f}), Provenance::Single};
    StyleEmbedding b{Tensor({2}, {2.f, 0.f}), Provenance::Single};
    StyleEmbedding one_hot = mix_styles({a, b}, {0.0, 1.0});
    CHECK(one_hot.values.v == b.values.v);
    CHECK(one_hot.provenance == Provenance::Mixed);

    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const double w = rng.uniform();
        StyleEmbedding viaMix = mix_styles({a, b}, {1.0 - w, w});
        StyleEmbedding viaInterp = interpolate_styles(a, b, w);
        for (int i = 0; i < 2; ++i)
            CHECK(viaMix.values.v[size_t(i)] ==
                  doctest::Approx(viaInterp.values.v[size_t(i)]).epsilon(1e-6));
    }

    std::vector<StyleEmbedding> basis;
    for (int i = 0; i < 5; ++i) {
        Tensor t = Tensor::zeros({5});
        t.v[size_t(i)] = 1.f;
        basis.push_back({t, Provenance::Single});
    }
    StyleEmbedding uniform = mix_styles(basis, {0.2, 0.2, 0.2, 0.2, 0.2});
    for (float v : uniform.values.v) CHECK(v == doctest::Approx(0.2f));

    CHECK_THROWS_AS(mix_styles({a, b}, {0.5, 0.6}), NumericError);
    CHECK_THROWS_AS(mix_styles({a, b}, {-0.2, 1.2}), NumericError);
}

TEST_CASE("style ops: perturbation magnitude, scaling law, reproducibility") {
    Rng seed_rng(5);
    const int d = 256;
    StyleEmbedding s{Tensor::randn({d}, seed_rng), Provenance::Single};

    Rng r0(42);
    StyleEmbedding same = perturb_style(s, 0.0, r0);
    CHECK(same.values.v == s.values.v);
    CHECK(same.provenance == Provenance::Perturbed);

    Rng r1(42), r2(42);
    StyleEmbedding p1 = perturb_style(s, 0.25, r1);
    StyleEmbedding p2 = perturb_style(s, 0.25, r2);
    CHECK(p1.values.v == p2.values.v);

    double norm = 0;
    for (int i = 0; i < d; ++i) {
        const double dlt = p1.values.v[size_t(i)] - s.values.v[size_t(i)];
        norm += dlt * dlt;
    }
    norm = std::sqrt(norm) / std::sqrt(double(d));
    CHECK(norm == doctest::Approx(0.25).epsilon(0.2));

    // scaling commutes with the seeded draw: perturb(S,m,seed) == S + m*perturb(0,1,seed)
    Rng r3(42);
    StyleEmbedding unit = perturb_style({Tensor::zeros({d}), Provenance::Single}, 1.0, r3);
    Rng r4(42);
    StyleEmbedding scaled = perturb_style(s, 2.0, r4);
    for (int i = 0; i < d; ++i)
        CHECK(scaled.values.v[size_t(i)] ==
              doctest::Approx(s.values.v[size_t(i)] + 2.f * unit.values.v[size_t(i)])
                  .epsilon(1e-4));
}

TEST_CASE("noise_bias_init: near-identity at tiny t, pure-noise statistics at T") {
    StubCodec codec;
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Raster img = render_toy_word("ink", 0);

    Rng r1(3);
    Tensor z_small = noise_bias_init(img, 1, codec, s, r1);
    const Tensor z0 = codec.encode(img).values;
    for (size_t i = 0; i < z0.v.size(); ++i)
        CHECK(z_small.v[i] == doctest::Approx(z0.v[i]).epsilon(0.1));

    // at t=T the output should look like a unit Gaussian: mean |.| within 3 sigma
    Rng r2(4);
    Tensor z_full = noise_bias_init(img, 1000, codec, s, r2);
    double mean_abs = 0;
    for (float v : z_full.v) mean_abs += std::abs(v);
    mean_abs /= double(z_full.numel());
    const double expect = std::sqrt(2.0 / M_PI);
    const double sigma = 0.6 / std::sqrt(double(z_full.numel()));
    CHECK(std::abs(mean_abs - expect) < 3 * sigma + 0.03);

    Rng r3(5), r4(5);
    Tensor a = noise_bias_init(img, 500, codec, s, r3);
    Tensor b = noise_bias_init(img, 500, codec, s, r4);
    CHECK(a.v == b.v);
    CHECK_THROWS_AS(noise_bias_init(img, 0, codec, s, r3), NumericError);
    CHECK_THROWS_AS(noise_bias_init(img, 1001, codec, s, r3), NumericError);
}

TEST_CASE("segment_long_word: reconstruction law and bounds") {
    CHECK(segment_long_word("the", 32) == std::vector<std::string>{"the"});
    auto parts = segment_long_word("interoperabilitationism", 10);
    std::string joined;
    for (const auto& p : parts) {
        CHECK(p.size() <= 10);
        joined += p;
    }
    CHECK(joined == "interoperabilitationism");

    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        std::string word;
        const int len = 1 + int(rng.next_below(60));
        for (int i = 0; i < len; ++i) word += char('a' + rng.next_below(26));
        const int max_len = 1 + int(rng.next_below(12));
        auto greedy = segment_long_word(word, max_len);
        std::string j1;
        for (const auto& p : greedy) {
            CHECK(!p.empty());
            CHECK(int(p.size()) <= max_len);
            j1 += p;
        }
        CHECK(j1 == word);
        Rng seg_rng{uint64_t(trial)};
        auto random = segment_long_word_random(word, max_len, seg_rng);
        std::string j2;
        for (const auto& p : random) {
            CHECK(!p.empty());
            CHECK(int(p.size()) <= max_len);
            j2 += p;
        }
        CHECK(j2 == word);
    }
}

TEST_CASE("compose_strip: trims ink, centers on a 64-high canvas, gap arithmetic") {
    // single already-trimmed image with zero gap comes back as its trim
    Raster a(kCanonH, 100, kBackground);
    for (int i = 0; i < kCanonH; ++i)
        for (int j = 0; j < 100; ++j) a.at(i, j) = 0.f;  // ink everywhere
    Raster single = compose_strip({a}, 0);
    CHECK(single.h == kCanonH);
    CHECK(single.w == 100);

    Raster b = a;
    Raster strip = compose_strip({a, b}, 10);
    CHECK(strip.h == kCanonH);
    CHECK(strip.w == 210);
    // the gap columns stay background
    for (int i = 0; i < kCanonH; ++i) CHECK(strip.at(i, 105) == kBackground);

    // trimming happens before concatenation
    Raster padded(kCanonH, kCanonW, kBackground);
    for (int i = 20; i < 40; ++i)
        for (int j = 30; j < 50; ++j) padded.at(i, j) = 0.f;
    Raster trimmed = compose_strip({padded}, 0);
    CHECK(trimmed.h == kCanonH);
    CHECK(trimmed.w == 20);

    CHECK_THROWS_AS(compose_strip({}, 4), DataError);
}
