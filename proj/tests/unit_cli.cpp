#include <doctest.h>

#include <fstream>

#include "hwgen/checkpoint.hpp"
#include "hwgen/config.hpp"
#include "hwgen/gridio.hpp"
#include "hwgen/toydata.hpp"
#include "test_util.hpp"

using namespace hwgen;

TEST_CASE("config: defaults load and typed getters parse") {
    RunConfig cfg;
    CHECK(cfg.get_int("diffusion.T") == 1000);
    CHECK(cfg.get_double("diffusion.beta_end") == doctest::Approx(0.02));
    CHECK(cfg.get_str("style_train.variant") == "hybrid");
    CHECK(cfg.get_ints("model.unet_widths") == std::vector<int>{64, 128, 256});
}

TEST_CASE("config: unknown keys rejected everywhere") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("model.dd", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.get_str("nope"), ConfigError);

    const std::string dir = test::scratch_dir("cfg");
    {
        std::ofstream f(dir + "/bad.cfg");
        f << "model.d = 128\nmodel.typo = 3\n";
    }
    RunConfig cfg2;
    try {
        cfg2.load_file(dir + "/bad.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        CHECK(std::string(e.what()).find("model.typo") != std::string::npos);
    }
}

TEST_CASE("config: file overrides defaults, set overrides file") {
    const std::string dir = test::scratch_dir("cfg2");
    {
        std::ofstream f(dir + "/a.cfg");
        f << "# comment line\n";
        f << "model.d = 128   # trailing comment\n";
        f << "diffusion.T = 500\n";
    }
    RunConfig cfg;
    cfg.load_file(dir + "/a.cfg");
    CHECK(cfg.get_int("model.d") == 128);
    CHECK(cfg.get_int("diffusion.T") == 500);
    cfg.set("model.d", "64");
    CHECK(cfg.get_int("model.d") == 64);
}

TEST_CASE("config: echo is stable and hashes depend on values") {
    RunConfig a, b;
    CHECK(a.echo() == b.echo());
    CHECK(a.hash() == b.hash());
    b.set("model.d", "128");
    CHECK(a.hash() != b.hash());
    CHECK(a.to_json().contains("model.d"));
}

TEST_CASE("config: malformed values raise typed errors") {
    RunConfig cfg;
    cfg.set("model.d", "abc");
    CHECK_THROWS_AS(cfg.get_int("model.d"), ConfigError);
    cfg.set("diffusion.beta_end", "zz");
    CHECK_THROWS_AS(cfg.get_double("diffusion.beta_end"), ConfigError);
    cfg.set("model.unet_widths", "a,b");
    CHECK_THROWS_AS(cfg.get_ints("model.unet_widths"), ConfigError);
}

TEST_CASE("checkpoint: round trip preserves tensors and meta") {
    const std::string dir = test::scratch_dir("ckpt");
    Rng rng(3);
    Checkpoint ck;
    ck.format = "style_encoder";
    ck.meta["d"] = 16;
    ck.add("a", Tensor::randn({3, 4}, rng));
    ck.add("b", Tensor::randn({5}, rng));
    ck.save(dir + "/x.ckpt");

    Checkpoint back = Checkpoint::load(dir + "/x.ckpt");
    CHECK(back.format == "style_encoder");
    CHECK(back.meta["d"] == 16);
    CHECK(back.tensor("a").v == ck.tensor("a").v);
    CHECK(back.tensor("b").shape == std::vector<int>{5});
    CHECK(back.has_tensor("a"));
    CHECK_FALSE(back.has_tensor("c"));
    CHECK_THROWS_AS(back.tensor("c"), CheckpointError);
}

TEST_CASE("checkpoint: format and version mismatches rejected explicitly") {
    const std::string dir = test::scratch_dir("ckpt2");
    Checkpoint ck;
    ck.format = "recognizer";
    ck.save(dir + "/r.ckpt");
    CHECK_THROWS_AS(Checkpoint::load(dir + "/r.ckpt", "diffusion"), CheckpointError);
    CHECK_NOTHROW(Checkpoint::load(dir + "/r.ckpt", "recognizer"));

    // corrupt the version field
    {
        std::ofstream f(dir + "/bad.ckpt", std::ios::binary | std::ios::trunc);
        const char magic[6] = {'H', 'W', 'C', 'K', '1', '\n'};
        f.write(magic, 6);
        const std::string hs = R"({"format":"recognizer","version":9,"meta":{},"tensors":[]})";
        const uint64_t len = hs.size();
        f.write(reinterpret_cast<const char*>(&len), sizeof len);
        f.write(hs.data(), std::streamsize(hs.size()));
    }
    CHECK_THROWS_AS(Checkpoint::load(dir + "/bad.ckpt"), CheckpointError);
    CHECK_THROWS_AS(Checkpoint::load(dir + "/missing.ckpt"), CheckpointError);

    {
        std::ofstream f(dir + "/junk.ckpt", std::ios::binary | std::ios::trunc);
        f << "not a checkpoint";
    }
    CHECK_THROWS_AS(Checkpoint::load(dir + "/junk.ckpt"), CheckpointError);
}

TEST_CASE("checkpoint: load_params shape-checks against the model") {
    Rng rng(4);
    Linear lin(3, 2, rng);
    NamedParams np;
    lin.collect("lin", np);
    Checkpoint ck;
    ck.format = "x";
    ck.add("lin.W", Tensor::zeros({3, 2}));
    ck.add("lin.b", Tensor::zeros({5}));  // wrong shape
    CHECK_THROWS_AS(ck.load_params(np), CheckpointError);
}

TEST_CASE("emit_grid: single labeled cell and layout arithmetic") {
    const std::string dir = test::scratch_dir("grid");
    Raster cell(kCanonH, kCanonW, 0.3f);
    const int pad = 8;

    Raster g1 = make_grid({{cell}}, {"row"}, {"col"}, pad);
    CHECK(g1.w == 120 + 1 * (kCanonW + pad));
    CHECK(g1.h == 24 + 1 * (kCanonH + pad));

    std::vector<std::vector<Raster>> cells(3, std::vector<Raster>(5, cell));
    Raster g2 = make_grid(cells, {"a", "b", "c"}, {"w=0", "w=1", "w=2", "w=3", "w=4"}, pad);
    CHECK(g2.w == 120 + 5 * (kCanonW + pad));
    CHECK(g2.h == 24 + 3 * (kCanonH + pad));

    // no labels -> no margins
    Raster g3 = make_grid(cells, {}, {}, pad);
    CHECK(g3.w == 5 * (kCanonW + pad));
    CHECK(g3.h == 3 * (kCanonH + pad));

    emit_grid({{cell}}, {}, {}, dir + "/g.png", {{"confighash", "cafe"}});
    CHECK(read_png_text(dir + "/g.png").at("confighash") == "cafe");
}

TEST_CASE("emit_grid: ragged matrices and non-canonical cells rejected") {
    Raster cell(kCanonH, kCanonW, 0.5f);
    std::vector<std::vector<Raster>> ragged = {{cell, cell}, {cell}};
    CHECK_THROWS_AS(make_grid(ragged, {}, {}, 8), DataError);
    Raster odd(10, 10, 0.f);
    CHECK_THROWS_AS(make_grid({{odd}}, {}, {}, 8), DataError);
    CHECK_THROWS_AS(make_grid({}, {}, {}, 8), DataError);
    CHECK_THROWS_AS(make_grid({{cell}}, {"a", "b"}, {}, 8), DataError);
}

TEST_CASE("glyph bank covers the toy charset and label symbols") {
    for (char c = 'a'; c <= 'z'; ++c) CHECK(glyph5x7(uint32_t(c)) != nullptr);
    for (char c = '0'; c <= '9'; ++c) CHECK(glyph5x7(uint32_t(c)) != nullptr);
    CHECK(glyph5x7('=') != nullptr);
    CHECK(glyph5x7('@') == nullptr);
    CHECK(glyph5x7('A') == glyph5x7('a'));
}
