#pragma once

#include "hwgen/schedule.hpp"
#include "hwgen/style_encoder.hpp"

namespace hwgen {

// (1-w) S_A + w S_B
StyleEmbedding interpolate_styles(const StyleEmbedding& a, const StyleEmbedding& b, double w);

// sum_i w_i S_i with non-negative weights summing to 1 (within 1e-6)
StyleEmbedding mix_styles(const std::vector<StyleEmbedding>& styles,
                          const std::vector<double>& weights);

// S + magnitude * g, g ~ N(0, I)
StyleEmbedding perturb_style(const StyleEmbedding& s, double magnitude, Rng& rng);

// q_sample(encode(style_image), t_init, fresh eps); feeds GenerationRequest.init_latent
Tensor noise_bias_init(const Raster& style_image, int t_init, const LatentCodec& codec,
                       const NoiseSchedule& schedule, Rng& rng);

// greedy fixed-width chunks; concatenation reconstructs the word exactly
std::vector<std::string> segment_long_word(const std::string& word, int max_len);
// seeded random split into parts of length <= max_len
std::vector<std::string> segment_long_word_random(const std::string& word, int max_len, Rng& rng);

// trims each image to its ink bounding box (threshold 0.5 on 1-pixel), centers
// the pieces on a height-64 canvas, gap_px background columns between
Raster compose_strip(const std::vector<Raster>& images, int gap_px);

}  // namespace hwgen
