#include "hwgen/toydata.hpp"

#include <filesystem>
#include <fstream>

#include "hwgen/gridio.hpp"

namespace fs = std::filesystem;

namespace hwgen {

namespace {
constexpr int kLogicalH = 16, kLogicalW = 64;

struct ToyStyle {
    float ink;     // stroke value
    int spacing;   // blank columns between glyphs
    bool shear;    // slant rows to the right
    bool dilate;   // thicken strokes by one logical pixel
    bool tall;     // double glyph height
};

// visually well-separated style bank; index 4 is reserved for the unseen writer
const ToyStyle kStyles[5] = {
    {0.00f, 1, false, false, false},  // w00 plain
    {0.00f, 1, true, false, false},   // w01 slanted
    {0.00f, 1, false, true, false},   // w02 bold
    {0.45f, 3, false, false, false},  // w03 light, wide spacing
    {0.00f, 1, false, false, true},   // w04 tall (unseen)
};

const std::vector<std::string> kVocab = {
    "the",   "and",  "ink",   "pen",   "word",  "hand", "write", "style", "quick",
    "brown", "fox",  "jump",  "over",  "lazy",  "dog",  "note",  "draw",  "line",
    "form",  "glyph", "trace", "curve", "mark",  "page", "text",  "font",  "loop",
    "dash",  "edge", "grid",  "wave",  "clay",  "stone", "brush", "paper", "quill",
};
}  // namespace

int toy_style_count() { return 5; }

std::string toy_writer_id(int style) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "w%02d", style);
    return std::string(buf);
}

const std::vector<std::string>& toy_vocab() { return kVocab; }

Raster render_toy_word(const std::string& word, int style_idx) {
    if (style_idx < 0 || style_idx >= toy_style_count())
        throw DataError("render_toy_word: unknown style index");
    const ToyStyle& st = kStyles[size_t(style_idx)];

    // paint on the logical grid
    std::vector<std::vector<float>> logical(kLogicalH, std::vector<float>(kLogicalW, 1.f));
    const int gh = st.tall ? 14 : 7;
    const int top = (kLogicalH - gh) / 2;
    int x = 1;
    for (uint32_t cp : utf8_decode(word)) {
        const uint8_t* rows = glyph5x7(cp);
        if (!rows) throw DataError("render_toy_word: no glyph for character in '" + word + "'");
        for (int r = 0; r < gh; ++r) {
            const int gr = st.tall ? r / 2 : r;
            const int shear_ofs = st.shear ? (gh - 1 - r) / 3 : 0;
            for (int c = 0; c < 5; ++c) {
                if (!(rows[gr] & (1 << (4 - c)))) continue;
                auto put = [&](int ii, int jj) {
                    if (ii >= 0 && ii < kLogicalH && jj >= 0 && jj < kLogicalW)
                        logical[size_t(ii)][size_t(jj)] = st.ink;
                };
                const int ii = top + r, jj = x + c + shear_ofs;
                put(ii, jj);
                if (st.dilate) {
                    put(ii + 1, jj);
                    put(ii, jj + 1);
                    put(ii + 1, jj + 1);
                }
            }
        }
        x += 5 + st.spacing + (st.dilate ? 1 : 0);
    }

    // upscale x4 to the canonical geometry
    Raster out(kCanonH, kCanonW);
    for (int i = 0; i < kCanonH; ++i)
        for (int j = 0; j < kCanonW; ++j) out.at(i, j) = logical[size_t(i / 4)][size_t(j / 4)];
    return out;
}

std::string make_toy_corpus(const std::string& out_dir, const ToyCorpusConfig& config) {
    if (config.writers < 2 || config.writers > 4)
        throw ConfigError("toy corpus supports 2..4 seen writers");
    if (config.train_words_per_writer + config.test_words_per_writer > int(kVocab.size()))
        throw ConfigError("toy corpus vocabulary too small for requested word counts");

    fs::create_directories(fs::path(out_dir) / "images");
    DatasetManifest m;
    m.base_dir = out_dir;

    auto add = [&](const std::string& word, int style, Split split) {
        const Raster img = render_toy_word(word, style);
        char name[64];
        std::snprintf(name, sizeof name, "images/%s_%s.png", word.c_str(),
                      toy_writer_id(style).c_str());
        save_png((fs::path(out_dir) / name).string(), img);
        ManifestEntry e;
        e.image_path = name;
        e.transcription = word;
        e.writer_id = toy_writer_id(style);
        e.split = split;
        m.entries.push_back(std::move(e));
    };

    for (int w = 0; w < config.writers; ++w) {
        for (int i = 0; i < config.train_words_per_writer; ++i)
            add(kVocab[size_t(i)], w, Split::Train);
        for (int i = 0; i < config.test_words_per_writer; ++i)
            add(kVocab[size_t(config.train_words_per_writer + i)], w, Split::TestSeenStyle);
    }
    if (config.include_unseen_writer) {
        for (int i = 0; i < config.unseen_samples; ++i)
            add(kVocab[size_t(i)], 4, Split::TestUnseenStyle);
    }

    // charset: a-z, one character per line
    {
        std::ofstream f((fs::path(out_dir) / "charset.txt").string(), std::ios::trunc);
        for (char c = 'a'; c <= 'z'; ++c) f << c << '\n';
    }
    const std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
    save_manifest(manifest_path, m);
    (void)config.seed;
    return manifest_path;
}

}  // namespace hwgen
