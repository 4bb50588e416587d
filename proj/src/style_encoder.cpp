#include "hwgen/style_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "hwgen/checkpoint.hpp"

namespace hwgen {

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Single: return "single";
        case Provenance::AggregatedK: return "aggregated-k";
        case Provenance::Interpolated: return "interpolated";
        case Provenance::Mixed: return "mixed";
        default: return "perturbed";
    }
}

TinyCnnBackbone::TinyCnnBackbone(const std::vector<int>& widths_, int d_, Rng& rng)
    : widths(widths_), d(d_) {
    if (widths.empty()) throw ConfigError("backbone needs at least one conv width");
    int cin = 1;
    for (int w : widths) {
        convs.emplace_back(cin, w, 3, 3, 2, 2, 1, 1, rng);
        const int groups = w % 8 == 0 ? 8 : (w % 4 == 0 ? 4 : 1);
        norms.emplace_back(w, groups);
        cin = w;
    }
    head = Linear(cin, d, rng);
}

VarPtr TinyCnnBackbone::fwd(const VarPtr& images) const {
    VarPtr x = images;
    for (size_t i = 0; i < convs.size(); ++i) x = silu(norms[i].fwd(convs[i].fwd(x)));
    return head.fwd(global_avg_pool(x));
}

NamedParams TinyCnnBackbone::named_params() const {
    NamedParams out;
    for (size_t i = 0; i < convs.size(); ++i) {
        convs[i].collect("backbone.conv" + std::to_string(i), out);
        norms[i].collect("backbone.norm" + std::to_string(i), out);
    }
    head.collect("backbone.head", out);
    return out;
}

std::shared_ptr<StyleBackbone> make_backbone(const std::string& kind,
                                             const std::vector<int>& widths, int d, Rng& rng) {
    if (kind == "tiny_cnn") return std::make_shared<TinyCnnBackbone>(widths, d, rng);
    throw ConfigError("unknown style backbone kind: '" + kind + "'");
}

int StyleEncoderModel::writer_index(const std::string& id) const {
    auto it = std::lower_bound(writers.begin(), writers.end(), id);
    if (it == writers.end() || *it != id) return -1;
    return int(it - writers.begin());
}

NamedParams StyleEncoderModel::named_params(bool include_classifier) const {
    NamedParams out = backbone->named_params();
    if (include_classifier) classifier.collect("classifier", out);
    return out;
}

VarPtr triplet_loss(const VarPtr& f_a, const VarPtr& f_p, const VarPtr& f_n, float margin,
                    float p) {
    if (margin < 0.f) throw NumericError("triplet_loss: margin must be >= 0");
    if (!f_a->val.same_shape(f_p->val) || !f_a->val.same_shape(f_n->val))
        throw NumericError("triplet_loss: dimension mismatch");
    VarPtr dp = p_distance(f_a, f_p, p);
    VarPtr dn = p_distance(f_a, f_n, p);
    return mean_all(relu(add_scalar(sub(dp, dn), margin)));
}

double triplet_loss(const Tensor& f_a, const Tensor& f_p, const Tensor& f_n, float margin,
                    float p) {
    NoGrad ng;
    auto as_row = [](const Tensor& t) {
        return constant(t.reshaped({1, int(t.numel())}));
    };
    return triplet_loss(as_row(f_a), as_row(f_p), as_row(f_n), margin, p)->scalar();
}

LossVariant parse_loss_variant(const std::string& s) {
    if (s == "hybrid") return LossVariant::Hybrid;
    if (s == "class") return LossVariant::ClassOnly;
    if (s == "triplet") return LossVariant::TripletOnly;
    throw ConfigError("unknown loss variant: '" + s + "' (expected hybrid|class|triplet)");
}

Tensor rasters_to_batch(const std::vector<Raster>& images) {
    if (images.empty()) throw DataError("rasters_to_batch: empty batch");
    Tensor out({int(images.size()), 1, kCanonH, kCanonW});
    for (size_t n = 0; n < images.size(); ++n) {
        const Raster& img = images[n];
        if (!img.is_canonical())
            throw DataError("expected canonical 64x256 image, got " + std::to_string(img.h) + "x" +
                            std::to_string(img.w));
        std::copy(img.px.begin(), img.px.end(),
                  out.v.begin() + int64_t(n) * kCanonH * kCanonW);
    }
    return out;
}

HybridLossTerms hybrid_loss(const TripletBatch& batch, const StyleEncoderModel& model,
                            float margin, float p, LossVariant variant) {
    if (batch.size() == 0) throw DataError("hybrid_loss: empty batch");
    std::vector<int> labels;
    for (const auto& w : batch.anchor_writer_ids) {
        const int idx = model.writer_index(w);
        if (idx < 0) throw DataError("hybrid_loss: writer '" + w + "' outside classifier range");
        labels.push_back(idx);
    }
    VarPtr f_a = model.backbone->fwd(leaf(rasters_to_batch(batch.anchors)));
    HybridLossTerms out;
    VarPtr cls, tri;
    if (variant != LossVariant::TripletOnly) {
        cls = cross_entropy(model.classifier.fwd(f_a), labels);
        out.class_term = cls->scalar();
    }
    if (variant != LossVariant::ClassOnly) {
        VarPtr f_p = model.backbone->fwd(leaf(rasters_to_batch(batch.positives)));
        VarPtr f_n = model.backbone->fwd(leaf(rasters_to_batch(batch.negatives)));
        tri = triplet_loss(f_a, f_p, f_n, margin, p);
        out.triplet_term = tri->scalar();
    }
    if (cls && tri)
        out.total = add(cls, tri);
    else
        out.total = cls ? cls : tri;
    return out;
}

StyleTrainResult train_style_encoder(const DatasetManifest& manifest,
                                     const StyleTrainConfig& config) {
    const auto train_idx = manifest.indices_of_split(Split::Train);
    if (train_idx.empty()) throw DataError("train_style_encoder: empty train split");
    auto writers = manifest.writers_of_split(Split::Train);
    if (writers.size() < 2) throw DataError("train_style_encoder: need at least 2 writers");

    Rng rng(config.seed);
    StyleTrainResult res;
    res.model.writers = writers;
    res.model.d = config.d;
    res.model.backbone = make_backbone(config.backbone, config.widths, config.d, rng);
    res.model.classifier = Linear(config.d, int(writers.size()), rng);

    auto named = res.model.named_params(true);
    Adam opt(param_list(named), float(config.lr), float(config.weight_decay), /*decoupled=*/false);

    const int steps_per_epoch =
        std::max(1, int((train_idx.size() + size_t(config.batch_size) - 1) / size_t(config.batch_size)));

    std::vector<Tensor> snapshot;
    auto take_snapshot = [&] {
        snapshot.clear();
        for (auto& [k, pvar] : named) snapshot.push_back(pvar->val);
    };
    auto restore_snapshot = [&] {
        for (size_t i = 0; i < named.size(); ++i) named[i].second->val = snapshot[i];
    };
    take_snapshot();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        opt.lr = float(config.lr * std::pow(config.lr_decay, epoch / std::max(1, config.lr_step_epochs)));
        double sum_total = 0, sum_class = 0, sum_triplet = 0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            TripletBatch batch = sample_triplets(manifest, config.batch_size, rng);
            HybridLossTerms terms =
                hybrid_loss(batch, res.model, config.margin, config.p_norm, config.variant);
            const double total = terms.total->scalar();
            if (!std::isfinite(total)) {
                restore_snapshot();
                res.aborted_non_finite = true;
                return res;
            }
            opt.zero_grad();
            backward(terms.total);
            opt.step();
            sum_total += total;
            sum_class += terms.class_term;
            sum_triplet += terms.triplet_term;
        }
        res.epoch_loss.push_back(sum_total / steps_per_epoch);
        res.epoch_class.push_back(sum_class / steps_per_epoch);
        res.epoch_triplet.push_back(sum_triplet / steps_per_epoch);
        take_snapshot();
    }

    // training writer-classification accuracy on the anchor images
    {
        NoGrad ng;
        int correct = 0, total = 0;
        const size_t chunk = 32;
        for (size_t ofs = 0; ofs < train_idx.size(); ofs += chunk) {
            std::vector<Raster> imgs;
            std::vector<int> labels;
            for (size_t i = ofs; i < std::min(train_idx.size(), ofs + chunk); ++i) {
                imgs.push_back(load_canonical(manifest, train_idx[i]));
                labels.push_back(res.model.writer_index(manifest.entries[train_idx[i]].writer_id));
            }
            VarPtr logits = res.model.classifier.fwd(res.model.backbone->fwd(leaf(rasters_to_batch(imgs))));
            const int C = logits->val.shape[1];
            for (size_t n = 0; n < imgs.size(); ++n) {
                int best = 0;
                for (int c = 1; c < C; ++c)
                    if (logits->val.at2(int(n), c) > logits->val.at2(int(n), best)) best = c;
                correct += best == labels[n] ? 1 : 0;
                ++total;
            }
        }
        res.final_train_accuracy = total ? double(correct) / total : 0.0;
    }
    return res;
}

StyleEmbedding embed_style(const StyleEncoderModel& model, const Raster& image) {
    NoGrad ng;
    VarPtr f = model.backbone->fwd(leaf(rasters_to_batch({image})));
    StyleEmbedding e;
    e.values = f->val.reshaped({model.d});
    e.provenance = Provenance::Single;
    if (!e.values.all_finite()) throw NumericError("embed_style: non-finite embedding");
    return e;
}

Tensor embed_style_batch(const StyleEncoderModel& model, const std::vector<Raster>& images) {
    NoGrad ng;
    return model.backbone->fwd(leaf(rasters_to_batch(images)))->val;
}

StyleEmbedding aggregate_exemplars(const std::vector<StyleEmbedding>& embeddings) {
    if (embeddings.empty()) throw DataError("aggregate_exemplars: empty list");
    const int d = embeddings[0].d();
    Tensor mean({d});
    for (const auto& e : embeddings) {
        if (e.d() != d) throw NumericError("aggregate_exemplars: dimension mismatch");
        for (int i = 0; i < d; ++i) mean.v[size_t(i)] += e.values.v[size_t(i)];
    }
    for (auto& v : mean.v) v /= float(embeddings.size());
    StyleEmbedding out;
    out.values = std::move(mean);
    out.provenance = Provenance::AggregatedK;
    return out;
}

void save_style_encoder(const StyleEncoderModel& model, const std::string& path,
                        const nlohmann::json& extra_meta) {
    Checkpoint ck;
    ck.format = "style_encoder";
    ck.meta["d"] = model.d;
    ck.meta["writers"] = model.writers;
    ck.meta["backbone"] = model.backbone->kind();
    ck.meta["widths"] = dynamic_cast<const TinyCnnBackbone&>(*model.backbone).widths;
    for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;
    ck.add_params(model.named_params(true));
    ck.save(path);
}

StyleEncoderModel load_style_encoder(const std::string& path) {
    const Checkpoint ck = Checkpoint::load(path, "style_encoder");
    Rng dummy(0);
    StyleEncoderModel m;
    m.d = ck.meta.at("d").get<int>();
    m.writers = ck.meta.at("writers").get<std::vector<std::string>>();
    m.backbone = make_backbone(ck.meta.at("backbone").get<std::string>(),
                               ck.meta.at("widths").get<std::vector<int>>(), m.d, dummy);
    m.classifier = Linear(m.d, int(m.writers.size()), dummy);
    ck.load_params(m.named_params(true));
    return m;
}

StyleCondition project_style(const StyleEmbedding& embedding, const Linear& projector) {
    if (projector.W->val.shape[0] != embedding.d())
        throw NumericError("project_style: dimension mismatch");
    NoGrad ng;
    VarPtr out = projector.fwd(constant(embedding.values.reshaped({1, embedding.d()})));
    StyleCondition c;
    c.values = out->val.reshaped({projector.W->val.shape[1]});
    return c;
}

}  // namespace hwgen
