#pragma once

#include <map>
#include <string>
#include <vector>

#include "hwgen/image.hpp"

namespace hwgen {

// 5x7 bitmap glyph rows (5 low bits per row, MSB left); nullptr when missing.
// Covers a-z (letterforms shared with A-Z), 0-9 and a few label symbols.
const uint8_t* glyph5x7(uint32_t codepoint);

// renders label text into img at (x, y), scale integer >= 1, ink value
void draw_label(Raster& img, const std::string& text, int x, int y, int scale, float ink);

// Composite image of a rectangular matrix of canonical cells with optional
// row/column labels. Layout is deterministic:
//   width  = left_margin + cols*(256+pad) and height = top_margin + rows*(64+pad)
Raster make_grid(const std::vector<std::vector<Raster>>& cells,
                 const std::vector<std::string>& row_labels,
                 const std::vector<std::string>& col_labels, int pad = 8);

void emit_grid(const std::vector<std::vector<Raster>>& cells,
               const std::vector<std::string>& row_labels,
               const std::vector<std::string>& col_labels, const std::string& path,
               const std::map<std::string, std::string>& text_chunks = {}, int pad = 8);

}  // namespace hwgen
