#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hwgen/image.hpp"

namespace hwgen {

inline constexpr int kMaxWordLength = 32;

enum class Split { Train, TestSeenStyle, TestUnseenStyle };
Split parse_split(const std::string& s);
std::string split_name(Split s);

struct ManifestEntry {
    std::string image_path;
    std::string transcription;
    std::string writer_id;
    Split split = Split::Train;
};

// Ordered set of permitted characters (unicode codepoints).
struct Charset {
    std::vector<uint32_t> codepoints;
    bool contains(uint32_t cp) const;
    static Charset from_file(const std::string& path);
    static Charset from_text(const std::vector<std::string>& transcriptions);
    uint64_t hash() const;
    int index_of(uint32_t cp) const;  // -1 when absent
    size_t size() const { return codepoints.size(); }
};

std::vector<uint32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<uint32_t>& cps);

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    Charset charset;
    std::string base_dir;  // image paths resolve relative to the manifest location

    std::vector<size_t> indices_of_split(Split s) const;
    std::vector<std::string> writers_of_split(Split s) const;  // sorted unique
    std::unordered_map<std::string, std::vector<size_t>> by_writer(Split s) const;
    std::string resolve_path(const std::string& image_path) const;
};

// Geometry rule: rescale to height 64 keeping aspect; pad right to 256 if it
// fits, otherwise shrink uniformly until width is 256 and pad the height.
// Constrained dimensions round down; padding is background white.
Raster canonicalize_image(const Raster& raw);

// Line format: image_path<TAB>transcription<TAB>writer_id<TAB>split
// check_files also stats every image path.
DatasetManifest load_manifest(const std::string& path,
                              const std::optional<Charset>& charset = std::nullopt,
                              bool check_files = true);
void save_manifest(const std::string& path, const DatasetManifest& m);

struct TripletBatch {
    std::vector<Raster> anchors, positives, negatives;
    std::vector<std::string> anchor_writer_ids;
    size_t size() const { return anchors.size(); }
};

struct ExemplarSet {
    std::vector<Raster> images;
    std::string writer_id;
    int k() const { return int(images.size()); }
};

// Anchors drawn uniformly over train samples whose writer has >=2 samples;
// positive uniform over the writer's other samples; negative uniform over
// samples of all other writers. Pure function of (manifest, batch_size, seed).
TripletBatch sample_triplets(const DatasetManifest& m, int batch_size, Rng& rng);

// k draws; without replacement when the writer has >= k samples, with
// replacement otherwise.
ExemplarSet sample_exemplars(const DatasetManifest& m, const std::string& writer_id, int k,
                             Rng& rng);

Raster load_canonical(const DatasetManifest& m, size_t entry_idx);

}  // namespace hwgen
