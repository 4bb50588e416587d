#pragma once

#include <string>

#include "hwgen/dataset.hpp"

namespace hwgen {

// Synthetic word-image corpus: each "writer" is a distinct procedural font
// style (plain, slanted, bold, light-wide, tall). Rendering happens on a
// 16x64 logical grid upscaled 4x, so images are constant over 4x4 blocks and
// the default latent codec round-trips them exactly.
struct ToyCorpusConfig {
    int writers = 4;                 // styles 0..writers-1; max 4 seen styles
    int train_words_per_writer = 25;
    int test_words_per_writer = 5;   // held-out words, same writers
    bool include_unseen_writer = true;  // the 5th style as test_unseen_style
    int unseen_samples = 8;
    uint64_t seed = 0;
};

// writes images/, manifest.tsv, charset.txt; returns manifest path
std::string make_toy_corpus(const std::string& out_dir, const ToyCorpusConfig& config);

// deterministic render of one word in one style (canonical 64x256)
Raster render_toy_word(const std::string& word, int style);

int toy_style_count();               // number of distinct styles in the bank
std::string toy_writer_id(int style);
const std::vector<std::string>& toy_vocab();

}  // namespace hwgen
