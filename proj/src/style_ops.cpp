#include "hwgen/style_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hwgen {

StyleEmbedding interpolate_styles(const StyleEmbedding& a, const StyleEmbedding& b, double w) {
    if (a.d() != b.d()) throw NumericError("interpolate_styles: dimension mismatch");
    if (w < 0.0 || w > 1.0) throw NumericError("interpolate_styles: weight must be in [0,1]");
    StyleEmbedding out;
    out.values = Tensor({a.d()});
    for (int i = 0; i < a.d(); ++i)
        out.values.v[size_t(i)] = float((1.0 - w) * a.values.v[size_t(i)] + w * b.values.v[size_t(i)]);
    out.provenance = Provenance::Interpolated;
    return out;
}

StyleEmbedding mix_styles(const std::vector<StyleEmbedding>& styles,
                          const std::vector<double>& weights) {
    if (styles.empty() || styles.size() != weights.size())
        throw NumericError("mix_styles: need matching styles and weights");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw NumericError("mix_styles: weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw NumericError("mix_styles: weights must sum to 1 (got " + std::to_string(sum) + ")");
    const int d = styles[0].d();
    StyleEmbedding out;
    out.values = Tensor({d});
    for (size_t s = 0; s < styles.size(); ++s) {
        if (styles[s].d() != d) throw NumericError("mix_styles: dimension mismatch");
        for (int i = 0; i < d; ++i)
            out.values.v[size_t(i)] += float(weights[s] * styles[s].values.v[size_t(i)]);
    }
    out.provenance = Provenance::Mixed;
    return out;
}

StyleEmbedding perturb_style(const StyleEmbedding& s, double magnitude, Rng& rng) {
    if (magnitude < 0.0) throw NumericError("perturb_style: magnitude must be >= 0");
    StyleEmbedding out;
    out.values = s.values;
    for (auto& v : out.values.v) v += float(magnitude * rng.normal());
    out.provenance = Provenance::Perturbed;
    if (!out.values.all_finite()) throw NumericError("perturb_style: non-finite result");
    return out;
}

Tensor noise_bias_init(const Raster& style_image, int t_init, const LatentCodec& codec,
                       const NoiseSchedule& schedule, Rng& rng) {
    if (t_init < 1 || t_init > schedule.T) throw NumericError("noise_bias_init: t_init out of range");
    const LatentGrid z0 = codec.encode(style_image);
    const Tensor eps = randn_latent(rng);
    return q_sample(z0.values, t_init, eps, schedule);
}

std::vector<std::string> segment_long_word(const std::string& word, int max_len) {
    if (max_len < 1) throw DataError("segment_long_word: max_len must be >= 1");
    const auto cps = utf8_decode(word);
    std::vector<std::string> parts;
    for (size_t i = 0; i < cps.size(); i += size_t(max_len)) {
        const size_t end = std::min(cps.size(), i + size_t(max_len));
        parts.push_back(utf8_encode({cps.begin() + long(i), cps.begin() + long(end)}));
    }
    return parts;
}

std::vector<std::string> segment_long_word_random(const std::string& word, int max_len, Rng& rng) {
    if (max_len < 1) throw DataError("segment_long_word: max_len must be >= 1");
    const auto cps = utf8_decode(word);
    std::vector<std::string> parts;
    size_t i = 0;
    while (i < cps.size()) {
        const size_t remain = cps.size() - i;
        size_t take = remain <= size_t(max_len)
                          ? remain
                          : 1 + rng.next_below(uint64_t(max_len));
        const size_t end = i + take;
        parts.push_back(utf8_encode({cps.begin() + long(i), cps.begin() + long(end)}));
        i = end;
    }
    return parts;
}

Raster compose_strip(const std::vector<Raster>& images, int gap_px) {
    if (images.empty()) throw DataError("compose_strip: empty list");
    if (gap_px < 0) throw DataError("compose_strip: negative gap");

    std::vector<Raster> trimmed;
    for (const auto& img : images) {
        int top, left, bottom, right;
        if (ink_bbox(img, 0.5f, top, left, bottom, right))
            trimmed.push_back(crop(img, top, left, bottom - top + 1, right - left + 1));
        else
            trimmed.push_back(img);  // blank image: keep as-is
    }
    int width = gap_px * int(trimmed.size() - 1);
    for (const auto& t : trimmed) width += t.w;

    Raster out(kCanonH, width, kBackground);
    int x = 0;
    for (const auto& t : trimmed) {
        const int h = std::min(t.h, kCanonH);
        const int y0 = (kCanonH - h) / 2;  // vertical centering
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < t.w; ++j) out.at(y0 + i, x + j) = t.at(i, j);
        x += t.w + gap_px;
    }
    return out;
}

}  // namespace hwgen
