#include <doctest.h>

#include <fstream>

#include "hwgen/metrics.hpp"
#include "hwgen/recognizer.hpp"
#include "hwgen/toydata.hpp"
#include "test_util.hpp"

using namespace hwgen;

TEST_CASE("frechet_distance: identical Gaussians score zero") {
    std::vector<double> mu = {0.3, -1.2, 4.0};
    std::vector<double> sigma = {2.0, 0.3, 0.1, 0.3, 1.5, 0.0, 0.1, 0.0, 0.9};
    CHECK(frechet_distance(mu, sigma, mu, sigma) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("frechet_distance: 1-D closed forms") {
    CHECK(frechet_distance({0.0}, {1.0}, {1.0}, {1.0}) == doctest::Approx(1.0));
    CHECK(frechet_distance({0.0}, {4.0}, {0.0}, {1.0}) == doctest::Approx(1.0));
}

TEST_CASE("frechet_distance: symmetric in its two Gaussians") {
    Rng rng(5);
    const int d = 4;
    auto random_cov = [&](double scale) {
        // A A^T + eps I is symmetric PSD
        std::vector<double> A(d * d);
        for (auto& v : A) v = rng.normal() * scale;
        std::vector<double> S(d * d, 0.0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k) S[size_t(i * d + j)] += A[size_t(i * d + k)] * A[size_t(j * d + k)];
        for (int i = 0; i < d; ++i) S[size_t(i * d + i)] += 1e-3;
        return S;
    };
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> mu1(d), mu2(d);
        for (auto& v : mu1) v = rng.normal();
        for (auto& v : mu2) v = rng.normal();
        auto s1 = random_cov(0.8), s2 = random_cov(1.3);
        const double ab = frechet_distance(mu1, s1, mu2, s2);
        const double ba = frechet_distance(mu2, s2, mu1, s1);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-6));
        CHECK(ab >= -1e-9);
    }
}

TEST_CASE("frechet_distance: rejects asymmetric or mismatched inputs") {
    CHECK_THROWS_AS(frechet_distance({0.0}, {1.0}, {0.0, 1.0}, {1.0, 0.0, 0.0, 1.0}),
                    NumericError);
    std::vector<double> bad = {1.0, 0.5, -0.5, 1.0};
    CHECK_THROWS_AS(frechet_distance({0.0, 0.0}, bad, {0.0, 0.0}, bad), NumericError);
}

TEST_CASE("symmetric_eig: recovers known spectrum") {
    // diag(3,1) rotated by 45 degrees
    const double c = std::sqrt(0.5);
    std::vector<double> A = {2.0, 1.0, 1.0, 2.0};  // eigvals 3 and 1
    std::vector<double> vals, vecs;
    symmetric_eig(A, 2, vals, vecs);
    std::sort(vals.begin(), vals.end());
    CHECK(vals[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(vals[1] == doctest::Approx(3.0).epsilon(1e-9));
    (void)c;
}

TEST_CASE("compute_fid: identical sets score zero, disjoint constants positive") {
    Rng rng(6);
    std::vector<Raster> set_a;
    for (int i = 0; i < 6; ++i) {
        Raster r(4, 4);
        for (auto& p : r.px) p = float(rng.uniform());
        set_a.push_back(r);
    }
    IdentityExtractor ident;
    CHECK(compute_fid(set_a, set_a, ident) == doctest::Approx(0.0).epsilon(1e-6));

    std::vector<Raster> white(3, Raster(4, 4, 1.f)), black(3, Raster(4, 4, 0.f));
    CHECK(compute_fid(white, black, ident) > 0.5);

    CHECK_THROWS_AS(compute_fid({set_a[0]}, set_a, ident), DataError);
}

TEST_CASE("compute_fid: identity extractor equals the pixel-moment closed form") {
    // synthetic 1-pixel "images" drawn from two known Gaussians
    Rng rng(7);
    auto draw = [&](double mu, double sd, int n) {
        std::vector<Raster> out;
        for (int i = 0; i < n; ++i) {
            Raster r(1, 1);
            r.px[0] = float(mu + sd * rng.normal());
            out.push_back(r);
        }
        return out;
    };
    const int n = 200000;
    auto a = draw(0.0, 1.0, n);
    auto b = draw(1.0, 1.0, n);
    IdentityExtractor ident;
    const double fid = compute_fid(a, b, ident);
    CHECK(fid == doctest::Approx(1.0).epsilon(0.01));  // (0-1)^2 + (1-1)^2
}

TEST_CASE("compute_fid equals frechet_distance of the pixel moments") {
    Rng rng(17);
    auto draw = [&](int n) {
        std::vector<Raster> out;
        for (int i = 0; i < n; ++i) {
            Raster r(2, 3);
            for (auto& p : r.px) p = float(rng.normal() * 0.4 + 0.5);
            out.push_back(r);
        }
        return out;
    };
    auto a = draw(40), b = draw(60);
    IdentityExtractor ident;
    const double via_fid = compute_fid(a, b, ident);

    // oracle: fit the Gaussians by hand from the same pixels
    auto moments = [](const std::vector<Raster>& imgs, std::vector<double>& mu,
                      std::vector<double>& sigma) {
        const size_t D = imgs[0].px.size(), N = imgs.size();
        mu.assign(D, 0.0);
        for (const auto& im : imgs)
            for (size_t d = 0; d < D; ++d) mu[d] += im.px[d];
        for (auto& v : mu) v /= double(N);
        sigma.assign(D * D, 0.0);
        for (const auto& im : imgs)
            for (size_t i = 0; i < D; ++i)
                for (size_t j = 0; j < D; ++j)
                    sigma[i * D + j] += (im.px[i] - mu[i]) * (im.px[j] - mu[j]);
        for (auto& v : sigma) v /= double(N - 1);
    };
    std::vector<double> mu1, s1, mu2, s2;
    moments(a, mu1, s1);
    moments(b, mu2, s2);
    CHECK(via_fid == doctest::Approx(frechet_distance(mu1, s1, mu2, s2)).epsilon(1e-9));
}

TEST_CASE("mssim: self similarity, inversion, stabilized constants") {
    Rng rng(8);
    Raster x(16, 24);
    for (auto& p : x.px) p = float(rng.uniform());
    CHECK(mssim({x}, {x}) == doctest::Approx(1.0));
    Raster inv(16, 24);
    for (size_t i = 0; i < x.px.size(); ++i) inv.px[i] = 1.f - x.px[i];
    CHECK(mssim({x}, {inv}) < 1.0);
    Raster c1(16, 24, 0.5f), c2(16, 24, 0.5f);
    CHECK(mssim({c1}, {c2}) == doctest::Approx(1.0));
    Raster small(3, 3, 0.5f);
    CHECK_THROWS_AS(ssim(small, small), DataError);
    CHECK_THROWS_AS(mssim({x}, {small}), DataError);
}

TEST_CASE("rmse: zero, unit and half cases") {
    Raster zero(8, 8, 0.f), one(8, 8, 1.f), half(8, 8, 0.5f);
    CHECK(rmse({zero}, {zero}) == doctest::Approx(0.0));
    CHECK(rmse({zero}, {one}) == doctest::Approx(1.0));
    CHECK(rmse({zero}, {half}) == doctest::Approx(0.5));
}

namespace {
DatasetManifest gen_like_manifest(const std::string& dir, int writers, int per_writer) {
    std::string body;
    for (int w = 0; w < writers; ++w)
        for (int s = 0; s < per_writer; ++s) {
            const std::string name = "g" + std::to_string(w) + "_" + std::to_string(s) + ".png";
            Raster img(kCanonH, kCanonW, kBackground);
            img.at(w, s % kCanonW) = 0.f;
            save_png(dir + "/" + name, img);
            body += name + "\tword\tw" + std::to_string(w) + "\ttrain\n";
        }
    std::ofstream f(dir + "/manifest.tsv", std::ios::trunc);
    f << body;
    f.close();
    return load_manifest(dir + "/manifest.tsv");
}
}  // namespace

TEST_CASE("writer_fidelity: oracle hits 1.0, uniform guess sits near 1/n") {
    const std::string dir = hwgen::test::scratch_dir("wfid");
    DatasetManifest m = gen_like_manifest(dir, 4, 100);

    const double oracle = writer_fidelity(
        m, [](const Raster&, const ManifestEntry& e) { return e.writer_id; });
    CHECK(oracle == doctest::Approx(1.0));

    Rng rng(9);
    const double uniform = writer_fidelity(m, [&rng](const Raster&, const ManifestEntry&) {
        return "w" + std::to_string(rng.next_below(4));
    });
    CHECK(std::abs(uniform - 0.25) < 0.08);

    // order invariance
    DatasetManifest shuffled = m;
    std::reverse(shuffled.entries.begin(), shuffled.entries.end());
    const double again = writer_fidelity(
        shuffled, [](const Raster&, const ManifestEntry& e) { return e.writer_id; });
    CHECK(again == doctest::Approx(oracle));
}

TEST_CASE("writer_fidelity rejects writers the classifier never saw") {
    const std::string dir = hwgen::test::scratch_dir("wfid2");
    DatasetManifest m = gen_like_manifest(dir, 3, 2);
    Rng rng(5);
    WriterClassifier wc({4, 8}, 8, 2, rng);
    wc.writers = {"w0", "w1"};  // manifest also contains w2
    CHECK_THROWS_AS(writer_fidelity(m, wc), DataError);
}

TEST_CASE("cer: identity, kitten/sitting, empty hypothesis") {
    CHECK(cer("same", "same") == doctest::Approx(0.0));
    CHECK(cer("kitten", "sitting") == doctest::Approx(0.5));
    CHECK(cer("abc", "") == doctest::Approx(1.0));
    CHECK_THROWS_AS(cer("", "abc"), DataError);
}

TEST_CASE("wer: exact match, single-word mismatch, list case") {
    CHECK(wer({"deep"}, {"deep"}) == doctest::Approx(0.0));
    CHECK(wer({"deep"}, {"keep"}) == doctest::Approx(1.0));
    CHECK(wer({"a", "b", "c"}, {"a", "c"}) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(wer({}, {"x"}), DataError);
}

namespace {
// independent oracle: plain recursive Levenshtein with memo
size_t lev_oracle(const std::string& a, const std::string& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<std::vector<size_t>> dp(n + 1, std::vector<size_t>(m + 1));
    for (size_t i = 0; i <= n; ++i)
        for (size_t j = 0; j <= m; ++j) {
            if (i == 0)
                dp[i][j] = j;
            else if (j == 0)
                dp[i][j] = i;
            else
                dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                                     dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
    return dp[n][m];
}

std::string random_word(Rng& rng, int max_len) {
    std::string s;
    const int len = int(rng.next_below(uint64_t(max_len)));
    for (int i = 0; i < len; ++i) s += char('a' + rng.next_below(4));  // narrow alphabet
    return s;
}
}  // namespace

TEST_CASE("edit distance agrees with the DP oracle and obeys the triangle bound") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::string a = random_word(rng, 12);
        const std::string b = random_word(rng, 12);
        const std::string c = random_word(rng, 12);
        const size_t ab = edit_distance(utf8_decode(a), utf8_decode(b));
        CHECK(ab == lev_oracle(a, b));
        const size_t ac = edit_distance(utf8_decode(a), utf8_decode(c));
        const size_t bc = edit_distance(utf8_decode(b), utf8_decode(c));
        CHECK(ac <= ab + bc);
    }
}

TEST_CASE("ctc_loss: peaked logits on a valid alignment score near zero") {
    // charset {a,b}: classes blank=0, a=1, b=2; frames follow a a _ b
    const int T = 6, C = 3;
    Tensor logits({1, T, C});
    const int path[T] = {1, 1, 0, 2, 2, 0};  // collapses to "ab"
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) logits.at3(0, t, c) = c == path[t] ? 25.f : 0.f;
    VarPtr l = ctc_loss(constant(logits), {{1, 2}});
    CHECK(l->scalar() < 0.01);
}

TEST_CASE("ctc_loss: infeasible target is skipped with a count") {
    const int T = 3, C = 3;
    Rng rng(13);
    VarPtr logits = constant(Tensor::randn({2, T, C}, rng));
    int skipped = 0;
    // "aaa" needs 5 frames (3 labels + 2 separating blanks), only 3 available
    VarPtr l = ctc_loss(logits, {{1, 1, 1}, {1}}, &skipped);
    CHECK(skipped == 1);
    CHECK(std::isfinite(l->scalar()));
    CHECK_THROWS_AS(ctc_loss(logits, {{1, 1, 1}, {2, 2, 2}}, &skipped), DataError);
}

TEST_CASE("ctc_loss: gradient matches finite differences") {
    const int T = 7, C = 4;
    Rng rng(17);
    VarPtr logits = leaf(Tensor::randn({2, T, C}, rng, 0.5f), true);
    const std::vector<std::vector<int>> targets = {{1, 2}, {3, 3}};
    const double err =
        hwgen::test::gradcheck([&] { return ctc_loss(logits, targets); }, {logits}, 1e-2);
    CHECK(err < 2e-3);
}

TEST_CASE("ctc decode collapses repeats and strips blanks") {
    Rng rng(19);
    Charset cs;
    for (char ch = 'a'; ch <= 'e'; ++ch) cs.codepoints.push_back(uint32_t(ch));
    Recognizer model(cs, 8, rng);
    Tensor frames({5, int(cs.size()) + 1});
    // blank, c c, blank, a  -> "ca"
    auto set_peak = [&](int t, int cls) {
        for (int c = 0; c < frames.shape[1]; ++c) frames.at2(t, c) = c == cls ? 5.f : 0.f;
    };
    set_peak(0, 0);
    set_peak(1, 3);
    set_peak(2, 3);
    set_peak(3, 0);
    set_peak(4, 1);
    CHECK(model.greedy_decode(frames) == "ca");
}

TEST_CASE("recognizer: logits shape is 64 frames by charset+1; checkpoint round trip") {
    Rng rng(23);
    Charset cs;
    for (char ch = 'a'; ch <= 'z'; ++ch) cs.codepoints.push_back(uint32_t(ch));
    Recognizer model(cs, 12, rng);
    NoGrad ng;
    VarPtr l = model.logits(leaf(rasters_to_batch({render_toy_word("pen", 0)})));
    CHECK(l->val.shape == std::vector<int>{1, 64, 27});

    const std::string dir = hwgen::test::scratch_dir("reco");
    model.save(dir + "/r.ckpt");
    Recognizer back = Recognizer::load(dir + "/r.ckpt");
    VarPtr l2 = back.logits(leaf(rasters_to_batch({render_toy_word("pen", 0)})));
    CHECK(l2->val.v == l->val.v);
    CHECK_THROWS_AS(Recognizer::load(dir + "/missing.ckpt"), CheckpointError);
}

TEST_CASE("ctc_train: loss decreases on a micro corpus and is seed-deterministic") {
    const std::string dir = hwgen::test::scratch_dir("ctc_train");
    ToyCorpusConfig tcfg;
    tcfg.writers = 2;
    tcfg.train_words_per_writer = 4;
    tcfg.test_words_per_writer = 1;
    tcfg.include_unseen_writer = false;
    DatasetManifest manifest = load_manifest(make_toy_corpus(dir, tcfg));

    RecognizerTrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch = 4;
    cfg.hidden = 16;
    cfg.seed = 3;
    RecognizerTrainResult r1 = ctc_train(manifest, cfg);
    CHECK(r1.epoch_loss.back() < r1.epoch_loss.front());
    RecognizerTrainResult r2 = ctc_train(manifest, cfg);
    CHECK(r1.epoch_loss.back() == doctest::Approx(r2.epoch_loss.back()).epsilon(1e-9));
}

TEST_CASE("metric report serializes present fields plus config echo") {
    MetricReport rep;
    rep.fid = 3.5;
    rep.writer_acc = 0.75;
    rep.n_real = 10;
    rep.n_gen = 10;
    rep.config_hash = "abc";
    auto j = rep.to_json();
    CHECK(j["fid"] == 3.5);
    CHECK(j.contains("writer_acc"));
    CHECK_FALSE(j.contains("mssim"));
    CHECK(j["config_hash"] == "abc");
}
