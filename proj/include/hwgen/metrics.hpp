#pragma once

#include <functional>
#include <optional>

#include <json.hpp>

#include "hwgen/checkpoint.hpp"
#include "hwgen/dataset.hpp"
#include "hwgen/nn.hpp"

namespace hwgen {

// ---- distribution distance ----

// symmetric eigendecomposition (cyclic Jacobi); A is n x n row-major
void symmetric_eig(const std::vector<double>& A, int n, std::vector<double>& eigvals,
                   std::vector<double>& eigvecs);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); negative eigenvalues from
// numerics clipped at 0
double frechet_distance(const std::vector<double>& mu1, const std::vector<double>& sigma1,
                        const std::vector<double>& mu2, const std::vector<double>& sigma2);

struct FeatureExtractor {
    virtual ~FeatureExtractor() = default;
    virtual std::vector<double> extract(const Raster& img) const = 0;
    virtual std::string name() const = 0;
};

// raw flattened pixels; for oracle tests and small rasters
struct IdentityExtractor : FeatureExtractor {
    std::vector<double> extract(const Raster& img) const override;
    std::string name() const override { return "identity"; }
};

// 8x8 block means (256 dims on canonical images)
struct PooledExtractor : FeatureExtractor {
    std::vector<double> extract(const Raster& img) const override;
    std::string name() const override { return "pooled"; }
};

double compute_fid(const std::vector<Raster>& real_images, const std::vector<Raster>& gen_images,
                   const FeatureExtractor& extractor);

// ---- paired image similarity ----

// mean SSIM over valid 7x7 uniform windows, k1=0.01 k2=0.03, dynamic range 1
double ssim(const Raster& a, const Raster& b);
double mssim(const std::vector<Raster>& images_a, const std::vector<Raster>& images_b);
double rmse(const std::vector<Raster>& images_a, const std::vector<Raster>& images_b);

// learned perceptual distance stays interface-only; no weights ship here
struct PerceptualMetric {
    virtual ~PerceptualMetric() = default;
    virtual double distance(const Raster& a, const Raster& b) const = 0;
    virtual std::string name() const = 0;
};

// ---- writer identity ----

// Independent writer classifier; deliberately a different backbone family from
// the style encoder (5x5 kernels, ReLU, plain convs, MLP head).
struct WriterClassifier {
    std::vector<Conv2d> convs;
    Linear fc1, fc2;
    std::vector<std::string> writers;
    int hidden = 0;

    WriterClassifier() = default;
    WriterClassifier(const std::vector<int>& widths, int hidden, int n_writers, Rng& rng);
    VarPtr logits(const VarPtr& images) const;
    VarPtr penultimate(const VarPtr& images) const;
    std::string classify(const Raster& img) const;
    std::vector<double> features(const Raster& img) const;
    NamedParams named_params() const;
    void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
    static WriterClassifier load(const std::string& path);
};

struct ClassifierTrainConfig {
    std::vector<int> widths = {12, 24, 48};
    int hidden = 64;
    int epochs = 15;
    int batch = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
};

WriterClassifier train_writer_classifier(const DatasetManifest& manifest,
                                         const ClassifierTrainConfig& config);

// penultimate layer of a trained classifier as FID features
struct ClassifierExtractor : FeatureExtractor {
    const WriterClassifier* model;
    explicit ClassifierExtractor(const WriterClassifier& m) : model(&m) {}
    std::vector<double> extract(const Raster& img) const override;
    std::string name() const override { return "classifier"; }
};

// fraction of generated samples classified to their conditioned writer
using WriterPredictor = std::function<std::string(const Raster&, const ManifestEntry&)>;
double writer_fidelity(const DatasetManifest& gen_manifest, const WriterPredictor& classifier);
// classifier-backed variant; rejects intended writers the classifier never saw
double writer_fidelity(const DatasetManifest& gen_manifest, const WriterClassifier& classifier);

// ---- text fidelity ----

size_t edit_distance(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);
size_t word_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

double cer(const std::string& reference, const std::string& hypothesis);
double wer(const std::vector<std::string>& reference_words,
           const std::vector<std::string>& hypothesis_words);

// ---- report ----

struct MetricReport {
    std::optional<double> fid, mssim, rmse, perceptual;
    std::optional<double> writer_acc;
    std::optional<double> cer_mean, cer_std, wer_mean, wer_std;
    int n_real = 0, n_gen = 0;
    nlohmann::json config_echo;
    std::string config_hash;
    nlohmann::json to_json() const;
};

}  // namespace hwgen
