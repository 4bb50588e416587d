#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hwgen/dataset.hpp"
#include "hwgen/nn.hpp"

namespace hwgen {

enum class Provenance { Single, AggregatedK, Interpolated, Mixed, Perturbed };
std::string provenance_name(Provenance p);

struct StyleEmbedding {
    Tensor values;  // (d)
    Provenance provenance = Provenance::Single;
    int d() const { return values.shape[0]; }
};

struct StyleCondition {
    Tensor values;  // (d_model)
};

// pluggable image-to-vector backbone
struct StyleBackbone {
    virtual ~StyleBackbone() = default;
    virtual VarPtr fwd(const VarPtr& images) const = 0;  // (N,1,64,256) -> (N,d)
    virtual NamedParams named_params() const = 0;
    virtual int out_dim() const = 0;
    virtual std::string kind() const = 0;
};

// default: 4 stride-2 conv stages, group norm, SiLU, global average pool, linear head
struct TinyCnnBackbone : StyleBackbone {
    std::vector<Conv2d> convs;
    std::vector<GroupNorm> norms;
    Linear head;
    std::vector<int> widths;
    int d = 0;

    TinyCnnBackbone() = default;
    TinyCnnBackbone(const std::vector<int>& widths, int d, Rng& rng);
    VarPtr fwd(const VarPtr& images) const override;
    NamedParams named_params() const override;
    int out_dim() const override { return d; }
    std::string kind() const override { return "tiny_cnn"; }
};

std::shared_ptr<StyleBackbone> make_backbone(const std::string& kind,
                                             const std::vector<int>& widths, int d, Rng& rng);

struct StyleEncoderModel {
    std::shared_ptr<StyleBackbone> backbone;
    Linear classifier;                // (d -> |writers|); training-time only
    std::vector<std::string> writers; // label order, sorted
    int d = 0;

    int writer_index(const std::string& id) const;
    NamedParams named_params(bool include_classifier = true) const;
};

// L = max(0, ||f_a - f_p||_p - ||f_a - f_n||_p + margin)
VarPtr triplet_loss(const VarPtr& f_a, const VarPtr& f_p, const VarPtr& f_n, float margin,
                    float p);
double triplet_loss(const Tensor& f_a, const Tensor& f_p, const Tensor& f_n, float margin,
                    float p);

enum class LossVariant { Hybrid, ClassOnly, TripletOnly };
LossVariant parse_loss_variant(const std::string& s);

struct HybridLossTerms {
    VarPtr total;    // == class_term + triplet_term per variant
    double class_term = 0;
    double triplet_term = 0;
};

// mean-over-batch cross-entropy on the anchor embeddings plus triplet loss
HybridLossTerms hybrid_loss(const TripletBatch& batch, const StyleEncoderModel& model,
                            float margin, float p, LossVariant variant = LossVariant::Hybrid);

struct StyleTrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double lr = 1e-3;
    double lr_decay = 0.1;
    int lr_step_epochs = 3;
    double weight_decay = 1e-4;
    float margin = 1.0f;
    float p_norm = 2.0f;
    LossVariant variant = LossVariant::Hybrid;
    uint64_t seed = 0;
    std::vector<int> widths = {16, 32, 64, 128};
    int d = 256;
    std::string backbone = "tiny_cnn";
};

struct StyleTrainResult {
    StyleEncoderModel model;
    std::vector<double> epoch_loss;       // L_comb per epoch (mean)
    std::vector<double> epoch_class;      // classification term
    std::vector<double> epoch_triplet;    // triplet term
    double final_train_accuracy = 0.0;    // anchor writer classification
    bool aborted_non_finite = false;
};

StyleTrainResult train_style_encoder(const DatasetManifest& manifest,
                                     const StyleTrainConfig& config);

// backbone output for one canonical image; provenance = single
StyleEmbedding embed_style(const StyleEncoderModel& model, const Raster& image);
Tensor embed_style_batch(const StyleEncoderModel& model, const std::vector<Raster>& images);

// arithmetic mean of k embeddings; provenance = aggregated-k
StyleEmbedding aggregate_exemplars(const std::vector<StyleEmbedding>& embeddings);

StyleCondition project_style(const StyleEmbedding& embedding, const Linear& projector);

Tensor rasters_to_batch(const std::vector<Raster>& images);  // (N,1,64,256)

// checkpoint format "style_encoder": backbone + classifier weights, writer
// list, dims, backbone descriptor, config echo
void save_style_encoder(const StyleEncoderModel& model, const std::string& path,
                        const nlohmann::json& extra_meta = {});
StyleEncoderModel load_style_encoder(const std::string& path);

}  // namespace hwgen
