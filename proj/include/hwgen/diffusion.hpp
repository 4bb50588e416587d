#pragma once

#include <optional>

#include "hwgen/checkpoint.hpp"
#include "hwgen/config.hpp"
#include "hwgen/denoiser.hpp"
#include "hwgen/schedule.hpp"
#include "hwgen/style_ops.hpp"
#include "hwgen/text_encoder.hpp"

namespace hwgen {

// projected conditions handed to the denoiser
struct ConditionBundle {
    Tensor style;                 // (d_model)
    Tensor text;                  // (L_max, d_model)
    std::vector<float> text_mask;
};

struct GenerationRequest {
    std::string text;
    std::optional<ExemplarSet> exemplars;
    std::optional<StyleEmbedding> style;  // takes precedence over exemplars
    int steps = 50;
    uint64_t seed = 0;
    std::optional<Tensor> init_latent;    // noise-bias path
};

// Everything a sampling process needs, restored verbatim from one checkpoint:
// frozen style encoder, jointly trained text encoder and projections, denoiser,
// schedule, codec tag, charset.
struct DiffusionPipeline {
    StyleEncoderModel style_encoder;
    CharTextEncoder text_encoder;
    Linear style_proj;  // d -> d_model
    Linear text_proj;   // d_text -> d_model
    std::shared_ptr<UNetDenoiser> denoiser;
    NoiseSchedule schedule;
    std::shared_ptr<LatentCodec> codec;
    Charset charset;
    int d_model = 0;
    nlohmann::json config_echo;
    std::string config_hash;

    NamedParams trainable_params() const;  // denoiser + text encoder + projections
    StyleEmbedding embed_exemplars(const ExemplarSet& set) const;
    ConditionBundle build_conditions(const StyleEmbedding& style, const TokenizedText& tokens) const;
};

// mean squared error between drawn noise and the model prediction at
// (q_sample(z0, t), t, conditions); t ~ U{1..T}, eps ~ N(0,I) per item
VarPtr training_loss(const Tensor& z0_batch, const VarPtr& ctx, const Tensor& ctx_mask,
                     const DenoiserBase& model, const NoiseSchedule& schedule, Rng& rng);

struct DiffusionTrainConfig {
    int train_steps = 2000;
    int batch = 8;
    double lr = 1e-4;
    double weight_decay = 0.2;  // decoupled
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int k = 5;
    UNetConfig unet;
    int d_text = 96;
    std::string codec = "stub";
    uint64_t seed = 0;
    int snapshot_every = 100;
};

// Adam moments, carried in training checkpoints so a resumed run continues
// the exact trajectory of an uninterrupted one
struct OptimState {
    std::vector<Tensor> m, v;  // aligned with trainable_params() order
    int t = 0;
    int next_step = 0;
};

struct DiffusionTrainResult {
    DiffusionPipeline pipeline;
    std::vector<double> step_loss;
    OptimState opt;
    bool aborted_non_finite = false;
};

// resumable: pass a checkpoint path in `resume_from` to continue training
DiffusionTrainResult train_diffusion(const DatasetManifest& manifest,
                                     const StyleEncoderModel& frozen_style,
                                     const DiffusionTrainConfig& config,
                                     const std::string& resume_from = "");

// deterministic DDIM sampling; decodes the final latent
Raster sample(const GenerationRequest& request, const DiffusionPipeline& pipeline);
// latent-space variant (used by tests to check shape propagation)
Tensor sample_latent(const GenerationRequest& request, const DiffusionPipeline& pipeline);

void save_diffusion(const DiffusionPipeline& pipeline, const std::string& path,
                    const nlohmann::json& extra_meta = {}, const OptimState* opt = nullptr);
DiffusionPipeline load_diffusion(const std::string& path);

struct RegenOptions {
    double style_noise = 0.0;  // magnitude added to the style embedding
    bool noise_bias = false;   // init the sampler from a noised same-writer image
    int k = 5;
    int steps = 50;
    uint64_t seed = 0;
};

// One generated image per manifest entry, same transcription and writer;
// deterministic given seed. Per-entry failures are recorded, not fatal.
struct RegenResult {
    DatasetManifest manifest;                // written to out_dir/manifest.tsv
    std::vector<std::string> failures;       // "entry N: reason"
};
RegenResult regenerate_corpus(const DatasetManifest& src, const DiffusionPipeline& pipeline,
                              const std::string& out_dir, const RegenOptions& opts);

}  // namespace hwgen
