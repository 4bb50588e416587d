#pragma once

#include <json.hpp>

#include "hwgen/checkpoint.hpp"
#include "hwgen/dataset.hpp"
#include "hwgen/nn.hpp"

namespace hwgen {

// CTC loss over per-frame class distributions, blank = class 0. logits is
// (N, T, C); targets hold class indices in [1, C). Samples whose label cannot
// be aligned within T frames are skipped (counted in `skipped`).
VarPtr ctc_loss(const VarPtr& logits, const std::vector<std::vector<int>>& targets,
                int* skipped = nullptr);

// Convolutional front end downsampling to 64 frames along the width, 2-layer
// bidirectional GRU, linear head over charset+blank.
struct Recognizer {
    Charset charset;
    std::vector<Conv2d> convs;
    std::vector<GroupNorm> norms;
    BiGRU rnn1, rnn2;
    Linear out;
    int hidden = 0;

    Recognizer() = default;
    Recognizer(const Charset& charset, int hidden, Rng& rng);

    VarPtr logits(const VarPtr& images) const;  // (N,1,64,256) -> (N,64,C)
    std::string greedy_decode(const Tensor& frame_logits) const;  // (T,C)
    std::string transcribe(const Raster& img) const;

    std::vector<int> target_of(const std::string& text) const;  // charset idx + 1
    NamedParams named_params() const;
    void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
    static Recognizer load(const std::string& path);
};

struct RecognizerTrainConfig {
    int hidden = 64;
    int epochs = 40;
    int batch = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
};

struct RecognizerTrainResult {
    Recognizer model;
    std::vector<double> epoch_loss;
    int skipped_samples = 0;
};

RecognizerTrainResult ctc_train(const DatasetManifest& manifest,
                                const RecognizerTrainConfig& config);

struct HtrScores {
    double cer = 0.0;  // corpus level: total edit distance / total reference length
    double wer = 0.0;
    int n = 0;
};

HtrScores evaluate_recognizer(const Recognizer& model, const DatasetManifest& manifest,
                              Split split);

}  // namespace hwgen
