#include "hwgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace hwgen {

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test_seen_style") return Split::TestSeenStyle;
    if (s == "test_unseen_style") return Split::TestUnseenStyle;
    throw DataError("unknown split tag: '" + s + "'");
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::TestSeenStyle: return "test_seen_style";
        default: return "test_unseen_style";
    }
}

std::vector<uint32_t> utf8_decode(const std::string& s) {
    std::vector<uint32_t> out;
    size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = s[i];
        uint32_t cp;
        int extra;
        if (c < 0x80) {
            cp = c;
            extra = 0;
        } else if ((c >> 5) == 0x6) {
            cp = c & 0x1F;
            extra = 1;
        } else if ((c >> 4) == 0xE) {
            cp = c & 0x0F;
            extra = 2;
        } else if ((c >> 3) == 0x1E) {
            cp = c & 0x07;
            extra = 3;
        } else {
            throw DataError("invalid UTF-8 byte in text");
        }
        if (i + extra >= s.size()) throw DataError("truncated UTF-8 sequence");
        for (int k = 1; k <= extra; ++k) {
            const unsigned char cc = s[i + k];
            if ((cc >> 6) != 0x2) throw DataError("invalid UTF-8 continuation");
            cp = (cp << 6) | (cc & 0x3F);
        }
        out.push_back(cp);
        i += size_t(extra) + 1;
    }
    return out;
}

std::string utf8_encode(const std::vector<uint32_t>& cps) {
    std::string out;
    for (uint32_t cp : cps) {
        if (cp < 0x80) {
            out += char(cp);
        } else if (cp < 0x800) {
            out += char(0xC0 | (cp >> 6));
            out += char(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            out += char(0xE0 | (cp >> 12));
            out += char(0x80 | ((cp >> 6) & 0x3F));
            out += char(0x80 | (cp & 0x3F));
        } else {
            out += char(0xF0 | (cp >> 18));
            out += char(0x80 | ((cp >> 12) & 0x3F));
            out += char(0x80 | ((cp >> 6) & 0x3F));
            out += char(0x80 | (cp & 0x3F));
        }
    }
    return out;
}

bool Charset::contains(uint32_t cp) const {
    return std::find(codepoints.begin(), codepoints.end(), cp) != codepoints.end();
}

int Charset::index_of(uint32_t cp) const {
    auto it = std::find(codepoints.begin(), codepoints.end(), cp);
    return it == codepoints.end() ? -1 : int(it - codepoints.begin());
}

Charset Charset::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open charset file: " + path);
    Charset cs;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cps = utf8_decode(line);
        if (cps.size() != 1)
            throw DataError("charset file expects one character per line, got: '" + line + "'");
        if (!cs.contains(cps[0])) cs.codepoints.push_back(cps[0]);
    }
    return cs;
}

Charset Charset::from_text(const std::vector<std::string>& transcriptions) {
    std::set<uint32_t> seen;
    for (const auto& t : transcriptions)
        for (uint32_t cp : utf8_decode(t)) seen.insert(cp);
    Charset cs;
    cs.codepoints.assign(seen.begin(), seen.end());
    return cs;
}

uint64_t Charset::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint32_t cp : codepoints) h = fnv1a(&cp, sizeof cp, h);
    return h;
}

std::vector<size_t> DatasetManifest::indices_of_split(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == s) out.push_back(i);
    return out;
}

std::vector<std::string> DatasetManifest::writers_of_split(Split s) const {
    std::set<std::string> ws;
    for (const auto& e : entries)
        if (e.split == s) ws.insert(e.writer_id);
    return std::vector<std::string>(ws.begin(), ws.end());
}

std::unordered_map<std::string, std::vector<size_t>> DatasetManifest::by_writer(Split s) const {
    std::unordered_map<std::string, std::vector<size_t>> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == s) out[entries[i].writer_id].push_back(i);
    return out;
}

std::string DatasetManifest::resolve_path(const std::string& image_path) const {
    fs::path p(image_path);
    if (p.is_absolute() || base_dir.empty()) return image_path;
    return (fs::path(base_dir) / p).string();
}

Raster canonicalize_image(const Raster& raw) {
    if (raw.h <= 0 || raw.w <= 0) throw DataError("canonicalize: zero-area input");
    if (raw.is_canonical()) return raw;

    // stage 1: height 64, width scaled by the same factor (floor)
    int w1 = int(int64_t(raw.w) * kCanonH / raw.h);
    w1 = std::max(w1, 1);
    int h1 = kCanonH;
    // stage 2: if too wide, shrink both dims until the width fits (floor on height)
    if (w1 > kCanonW) {
        h1 = std::max(1, int(int64_t(h1) * kCanonW / w1));
        w1 = kCanonW;
    }
    Raster scaled = resize_bilinear(raw, h1, w1);
    Raster out(kCanonH, kCanonW, kBackground);
    for (int i = 0; i < h1; ++i)
        for (int j = 0; j < w1; ++j) out.at(i, j) = std::clamp(scaled.at(i, j), 0.f, 1.f);
    return out;
}

DatasetManifest load_manifest(const std::string& path, const std::optional<Charset>& charset,
                              bool check_files) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open manifest: " + path);
    DatasetManifest m;
    m.base_dir = fs::path(path).parent_path().string();

    std::vector<std::string> transcriptions;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        size_t start = 0;
        for (size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 4)
            throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 tab-separated fields, got " +
                            std::to_string(fields.size()));
        ManifestEntry e;
        e.image_path = fields[0];
        e.transcription = fields[1];
        e.writer_id = fields[2];
        try {
            e.split = parse_split(fields[3]);
        } catch (const DataError& err) {
            throw DataError("manifest line " + std::to_string(lineno) + ": " + err.what());
        }
        if (e.transcription.empty())
            throw DataError("manifest line " + std::to_string(lineno) + ": empty transcription");
        const auto cps = utf8_decode(e.transcription);
        if (int(cps.size()) > kMaxWordLength)
            throw DataError("manifest line " + std::to_string(lineno) + ": transcription longer than " +
                            std::to_string(kMaxWordLength) + " characters");
        if (charset) {
            for (uint32_t cp : cps)
                if (!charset->contains(cp))
                    throw DataError("manifest line " + std::to_string(lineno) +
                                    ": character '" + utf8_encode({cp}) + "' not in charset");
        }
        transcriptions.push_back(e.transcription);
        m.entries.push_back(std::move(e));
    }
    m.charset = charset ? *charset : Charset::from_text(transcriptions);

    // writer/split exclusivity: a writer is either a training-style writer or unseen
    std::set<std::string> train_side, unseen_side;
    for (const auto& e : m.entries) {
        (e.split == Split::TestUnseenStyle ? unseen_side : train_side).insert(e.writer_id);
    }
    for (const auto& w : unseen_side)
        if (train_side.count(w))
            throw DataError("writer '" + w + "' appears in both seen and unseen splits");

    if (check_files) {
        for (size_t i = 0; i < m.entries.size(); ++i) {
            const auto p = m.resolve_path(m.entries[i].image_path);
            std::ifstream probe(p, std::ios::binary);
            if (!probe)
                throw DataError("manifest entry " + std::to_string(i + 1) + ": unreadable image '" + p + "'");
        }
    }
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw DataError("cannot write manifest: " + tmp);
        for (const auto& e : m.entries)
            f << e.image_path << '\t' << e.transcription << '\t' << e.writer_id << '\t'
              << split_name(e.split) << '\n';
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot rename manifest to: " + path);
}

Raster load_canonical(const DatasetManifest& m, size_t entry_idx) {
    return canonicalize_image(load_image(m.resolve_path(m.entries[entry_idx].image_path)));
}

TripletBatch sample_triplets(const DatasetManifest& m, int batch_size, Rng& rng) {
    if (batch_size <= 0) throw DataError("sample_triplets: batch_size must be positive");
    auto groups = m.by_writer(Split::Train);
    if (groups.size() < 2) throw DataError("sample_triplets: need at least 2 train writers");

    // deterministic ordering regardless of hash-map iteration
    std::vector<std::string> writers;
    for (auto& [w, idxs] : groups) writers.push_back(w);
    std::sort(writers.begin(), writers.end());

    std::vector<size_t> anchor_pool;        // entries whose writer has >=2 samples
    std::vector<size_t> all_train;
    for (const auto& w : writers) {
        const auto& idxs = groups[w];
        all_train.insert(all_train.end(), idxs.begin(), idxs.end());
        if (idxs.size() >= 2) anchor_pool.insert(anchor_pool.end(), idxs.begin(), idxs.end());
    }
    if (anchor_pool.empty()) throw DataError("sample_triplets: no writer has 2+ samples");

    TripletBatch batch;
    for (int b = 0; b < batch_size; ++b) {
        const size_t a_idx = anchor_pool[rng.next_below(anchor_pool.size())];
        const auto& writer = m.entries[a_idx].writer_id;
        const auto& same = groups[writer];
        // positive: uniform over the writer's other samples
        size_t p_idx;
        do {
            p_idx = same[rng.next_below(same.size())];
        } while (p_idx == a_idx);
        // negative: uniform over samples of every other writer
        size_t n_idx;
        do {
            n_idx = all_train[rng.next_below(all_train.size())];
        } while (m.entries[n_idx].writer_id == writer);

        batch.anchors.push_back(load_canonical(m, a_idx));
        batch.positives.push_back(load_canonical(m, p_idx));
        batch.negatives.push_back(load_canonical(m, n_idx));
        batch.anchor_writer_ids.push_back(writer);
    }
    return batch;
}

ExemplarSet sample_exemplars(const DatasetManifest& m, const std::string& writer_id, int k,
                             Rng& rng) {
    if (k < 1) throw DataError("sample_exemplars: k must be >= 1");
    std::vector<size_t> pool;
    for (size_t i = 0; i < m.entries.size(); ++i)
        if (m.entries[i].writer_id == writer_id) pool.push_back(i);
    if (pool.empty()) throw DataError("sample_exemplars: unknown writer '" + writer_id + "'");

    std::vector<size_t> chosen;
    if (int(pool.size()) >= k) {
        // partial Fisher-Yates draw without replacement
        std::vector<size_t> tmp = pool;
        for (int i = 0; i < k; ++i) {
            const size_t j = i + rng.next_below(tmp.size() - size_t(i));
            std::swap(tmp[size_t(i)], tmp[j]);
            chosen.push_back(tmp[size_t(i)]);
        }
    } else {
        // every sample appears at least once, remainder drawn with replacement
        chosen = pool;
        while (int(chosen.size()) < k) chosen.push_back(pool[rng.next_below(pool.size())]);
        for (size_t i = chosen.size(); i > 1; --i)
            std::swap(chosen[i - 1], chosen[rng.next_below(i)]);
    }
    ExemplarSet set;
    set.writer_id = writer_id;
    for (size_t idx : chosen) set.images.push_back(load_canonical(m, idx));
    return set;
}

}  // namespace hwgen
