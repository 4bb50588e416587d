#include "hwgen/gridio.hpp"

#include <algorithm>
#include <cctype>

#include "hwgen/dataset.hpp"

namespace hwgen {

namespace {
struct Glyph {
    uint32_t cp;
    uint8_t rows[7];
};

const Glyph kFont[] = {
    {'a', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'b', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'c', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'d', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'e', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'f', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'g', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'h', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'i', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'j', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'k', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'l', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'m', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'n', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'o', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'p', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'r', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'s', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'t', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'u', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'v', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'w', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
    {'x', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
    {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};
}  // namespace

const uint8_t* glyph5x7(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') cp = cp - 'A' + 'a';
    for (const auto& g : kFont)
        if (g.cp == cp) return g.rows;
    return nullptr;
}

void draw_label(Raster& img, const std::string& text, int x, int y, int scale, float ink) {
    int cx = x;
    for (uint32_t cp : utf8_decode(text)) {
        const uint8_t* rows = glyph5x7(cp);
        if (rows) {
            for (int r = 0; r < 7; ++r)
                for (int c = 0; c < 5; ++c) {
                    if (!(rows[r] & (1 << (4 - c)))) continue;
                    for (int di = 0; di < scale; ++di)
                        for (int dj = 0; dj < scale; ++dj) {
                            const int ii = y + r * scale + di, jj = cx + c * scale + dj;
                            if (ii >= 0 && ii < img.h && jj >= 0 && jj < img.w) img.at(ii, jj) = ink;
                        }
                }
        }
        cx += 6 * scale;
    }
}

Raster make_grid(const std::vector<std::vector<Raster>>& cells,
                 const std::vector<std::string>& row_labels,
                 const std::vector<std::string>& col_labels, int pad) {
    if (cells.empty() || cells[0].empty()) throw DataError("make_grid: empty matrix");
    const size_t rows = cells.size(), cols = cells[0].size();
    for (const auto& row : cells) {
        if (row.size() != cols) throw DataError("make_grid: ragged matrix");
        for (const auto& img : row)
            if (!img.is_canonical()) throw DataError("make_grid: cells must be canonical 64x256");
    }
    if (!row_labels.empty() && row_labels.size() != rows)
        throw DataError("make_grid: row label count mismatch");
    if (!col_labels.empty() && col_labels.size() != cols)
        throw DataError("make_grid: column label count mismatch");

    const int left = row_labels.empty() ? 0 : 120;
    const int top = col_labels.empty() ? 0 : 24;
    Raster out(top + int(rows) * (kCanonH + pad), left + int(cols) * (kCanonW + pad), kBackground);

    for (size_t c = 0; c < col_labels.size(); ++c)
        draw_label(out, col_labels[c], left + int(c) * (kCanonW + pad) + 4, 4, 2, 0.f);
    for (size_t r = 0; r < rows; ++r) {
        if (!row_labels.empty())
            draw_label(out, row_labels[r], 4, top + int(r) * (kCanonH + pad) + 24, 2, 0.f);
        for (size_t c = 0; c < cols; ++c) {
            const Raster& img = cells[r][c];
            const int y0 = top + int(r) * (kCanonH + pad);
            const int x0 = left + int(c) * (kCanonW + pad);
            for (int i = 0; i < img.h; ++i)
                for (int j = 0; j < img.w; ++j) out.at(y0 + i, x0 + j) = img.at(i, j);
        }
    }
    return out;
}

void emit_grid(const std::vector<std::vector<Raster>>& cells,
               const std::vector<std::string>& row_labels,
               const std::vector<std::string>& col_labels, const std::string& path,
               const std::map<std::string, std::string>& text_chunks, int pad) {
    save_png(path, make_grid(cells, row_labels, col_labels, pad), text_chunks);
}

}  // namespace hwgen
