#pragma once

#include <map>
#include <string>
#include <vector>

#include "hwgen/common.hpp"

namespace hwgen {

inline constexpr int kCanonH = 64;
inline constexpr int kCanonW = 256;
inline constexpr float kBackground = 1.0f;  // white paper, dark ink

// Grayscale image, values in [0,1], row-major.
struct Raster {
    int h = 0, w = 0;
    std::vector<float> px;

    Raster() = default;
    Raster(int h_, int w_, float fill = 0.f) : h(h_), w(w_), px(size_t(h_) * w_, fill) {}

    float& at(int i, int j) { return px[size_t(i) * w + j]; }
    float at(int i, int j) const { return px[size_t(i) * w + j]; }
    bool is_canonical() const { return h == kCanonH && w == kCanonW; }
};

// 8-bit gray or RGB(A) PNG, and P5/P6 netpbm. RGB collapses to the channel mean.
Raster load_image(const std::string& path);
// Writes 8-bit grayscale PNG. text_chunks become tEXt entries (config hash etc).
void save_png(const std::string& path, const Raster& img,
              const std::map<std::string, std::string>& text_chunks = {});
// Reads tEXt entries back (used to verify artifacts carry their config hash).
std::map<std::string, std::string> read_png_text(const std::string& path);

Raster resize_bilinear(const Raster& src, int oh, int ow);

// ink bounding box under threshold: ink where (1 - px) > thr; returns false if no ink
bool ink_bbox(const Raster& img, float thr, int& top, int& left, int& bottom, int& right);
Raster crop(const Raster& img, int top, int left, int h, int w);

}  // namespace hwgen
