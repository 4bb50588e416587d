#include "hwgen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace hwgen {

namespace {
uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    uint64_t h = 0xcbf29ce484222325ull;
    h = fnv1a(&seed, sizeof seed, h);
    h = fnv1a(&a, sizeof a, h);
    h = fnv1a(&b, sizeof b, h);
    return h;
}
}  // namespace

NamedParams DiffusionPipeline::trainable_params() const {
    NamedParams out = denoiser->named_params();
    for (auto& [k, p] : text_encoder.named_params()) out.push_back({k, p});
    style_proj.collect("proj.style", out);
    text_proj.collect("proj.text", out);
    return out;
}

StyleEmbedding DiffusionPipeline::embed_exemplars(const ExemplarSet& set) const {
    if (set.images.empty()) throw DataError("embed_exemplars: empty exemplar set");
    std::vector<StyleEmbedding> embs;
    for (const auto& img : set.images) embs.push_back(embed_style(style_encoder, img));
    return aggregate_exemplars(embs);
}

ConditionBundle DiffusionPipeline::build_conditions(const StyleEmbedding& style,
                                                    const TokenizedText& tokens) const {
    ConditionBundle cb;
    cb.style = project_style(style, style_proj).values;
    TextCondition tc = encode_text(tokens, text_encoder, text_proj);
    cb.text = tc.values;
    cb.text_mask = tc.mask;
    return cb;
}

VarPtr training_loss(const Tensor& z0_batch, const VarPtr& ctx, const Tensor& ctx_mask,
                     const DenoiserBase& model, const NoiseSchedule& schedule, Rng& rng) {
    if (z0_batch.ndim() != 4) throw NumericError("training_loss: z0 batch must be 4-D");
    const int N = z0_batch.shape[0];
    const int64_t item = z0_batch.numel() / N;

    std::vector<int> t(static_cast<size_t>(N), 0);
    Tensor z_t(z0_batch.shape);
    Tensor eps(z0_batch.shape);
    for (int n = 0; n < N; ++n) {
        t[size_t(n)] = int(rng.next_below(uint64_t(schedule.T))) + 1;
        const double ab = schedule.alpha_bar(t[size_t(n)]);
        const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
        for (int64_t i = 0; i < item; ++i) {
            const float e = float(rng.normal());
            eps.v[size_t(n * item + i)] = e;
            z_t.v[size_t(n * item + i)] =
                float(c0 * z0_batch.v[size_t(n * item + i)] + c1 * e);
        }
    }
    VarPtr eps_hat = model.fwd(leaf(std::move(z_t)), t, ctx, ctx_mask);
    if (!eps_hat->val.same_shape(eps))
        throw NumericError("denoiser output shape != latent shape");
    return mse_loss(eps_hat, eps);
}

namespace {

struct TrainCache {
    std::vector<Tensor> latents;                     // per train entry, (4,8,32)
    std::vector<Tensor> style_embs;                  // per train entry, (d)
    std::vector<TokenizedText> tokens;               // per train entry
    std::vector<size_t> entry_ids;                   // manifest indices
    std::unordered_map<std::string, std::vector<int>> by_writer;  // -> cache rows
};

TrainCache build_cache(const DatasetManifest& manifest, const StyleEncoderModel& frozen,
                       const LatentCodec& codec) {
    TrainCache cache;
    const auto train_idx = manifest.indices_of_split(Split::Train);
    if (train_idx.empty()) throw DataError("train_diffusion: empty train split");
    for (size_t idx : train_idx) {
        const Raster img = load_canonical(manifest, idx);
        cache.latents.push_back(codec.encode(img).values);
        cache.style_embs.push_back(embed_style(frozen, img).values);
        cache.tokens.push_back(tokenize(manifest.entries[idx].transcription));
        cache.by_writer[manifest.entries[idx].writer_id].push_back(int(cache.entry_ids.size()));
        cache.entry_ids.push_back(idx);
    }
    return cache;
}

// k-shot mean of cached embeddings; without replacement when the writer has
// enough samples, mirroring sample_exemplars
Tensor kshot_embedding(const TrainCache& cache, const std::string& writer, int k, int d, Rng& rng) {
    const auto& pool = cache.by_writer.at(writer);
    std::vector<int> chosen;
    if (int(pool.size()) >= k) {
        std::vector<int> tmp = pool;
        for (int i = 0; i < k; ++i) {
            const size_t j = size_t(i) + rng.next_below(tmp.size() - size_t(i));
            std::swap(tmp[size_t(i)], tmp[j]);
            chosen.push_back(tmp[size_t(i)]);
        }
    } else {
        chosen = pool;
        while (int(chosen.size()) < k) chosen.push_back(pool[rng.next_below(pool.size())]);
        for (size_t i = chosen.size(); i > 1; --i)
            std::swap(chosen[i - 1], chosen[rng.next_below(i)]);
    }
    Tensor mean({d});
    for (int row : chosen)
        for (int i = 0; i < d; ++i) mean.v[size_t(i)] += cache.style_embs[size_t(row)].v[size_t(i)];
    for (auto& v : mean.v) v /= float(chosen.size());
    return mean;
}

Tensor make_ctx_mask(const std::vector<TokenizedText>& tokens) {
    const int N = int(tokens.size());
    Tensor mask({N, 1 + kLMax});
    for (int n = 0; n < N; ++n) {
        mask.at2(n, 0) = 1.f;  // style token
        for (int l = 0; l < kLMax; ++l) mask.at2(n, 1 + l) = tokens[size_t(n)].mask[size_t(l)];
    }
    return mask;
}

}  // namespace

DiffusionTrainResult train_diffusion(const DatasetManifest& manifest,
                                     const StyleEncoderModel& frozen_style,
                                     const DiffusionTrainConfig& config,
                                     const std::string& resume_from) {
    DiffusionTrainResult res;
    int start_step = 0;
    Rng init_rng(mix_seed(config.seed, 0x17175));

    if (resume_from.empty()) {
        res.pipeline.style_encoder = frozen_style;
        res.pipeline.d_model = config.unet.d_model;
        res.pipeline.text_encoder = CharTextEncoder(config.d_text, init_rng);
        res.pipeline.style_proj = Linear(frozen_style.d, config.unet.d_model, init_rng);
        res.pipeline.text_proj = Linear(config.d_text, config.unet.d_model, init_rng);
        res.pipeline.denoiser = std::make_shared<UNetDenoiser>(config.unet, init_rng);
        res.pipeline.schedule = make_schedule(config.T, config.beta_start, config.beta_end);
        res.pipeline.codec = make_codec(config.codec);
        res.pipeline.charset = manifest.charset;
    } else {
        res.pipeline = load_diffusion(resume_from);
        const Checkpoint ck = Checkpoint::load(resume_from, "diffusion");
        start_step = ck.meta.value("train.next_step", 0);
    }

    auto named = res.pipeline.trainable_params();
    Adam opt(param_list(named), float(config.lr), float(config.weight_decay), /*decoupled=*/true);
    if (!resume_from.empty()) {
        const Checkpoint ck = Checkpoint::load(resume_from, "diffusion");
        if (ck.meta.contains("opt.t")) {
            opt.t = ck.meta["opt.t"].get<int>();
            for (size_t i = 0; i < named.size(); ++i) {
                opt.m[i] = ck.tensor("opt.m." + named[i].first);
                opt.v[i] = ck.tensor("opt.v." + named[i].first);
            }
        }
    }

    TrainCache cache = build_cache(manifest, res.pipeline.style_encoder, *res.pipeline.codec);
    const int n_train = int(cache.entry_ids.size());
    const int d = res.pipeline.style_encoder.d;

    std::vector<Tensor> snapshot;
    auto take_snapshot = [&] {
        snapshot.clear();
        for (auto& [k, p] : named) snapshot.push_back(p->val);
    };
    auto restore_snapshot = [&] {
        for (size_t i = 0; i < named.size(); ++i) named[i].second->val = snapshot[i];
    };
    take_snapshot();

    for (int step = start_step; step < config.train_steps; ++step) {
        Rng rng(mix_seed(config.seed, 0x57e9, uint64_t(step)));
        const int N = std::min(config.batch, n_train);

        Tensor z0({N, kLatentC, kLatentH, kLatentW});
        Tensor style_rows({N, d});
        std::vector<TokenizedText> tokens;
        for (int n = 0; n < N; ++n) {
            const int row = int(rng.next_below(uint64_t(n_train)));
            std::copy(cache.latents[size_t(row)].v.begin(), cache.latents[size_t(row)].v.end(),
                      z0.v.begin() + int64_t(n) * kLatentC * kLatentH * kLatentW);
            const auto& writer = manifest.entries[cache.entry_ids[size_t(row)]].writer_id;
            const Tensor emb = kshot_embedding(cache, writer, config.k, d, rng);
            std::copy(emb.v.begin(), emb.v.end(), style_rows.v.begin() + int64_t(n) * d);
            tokens.push_back(cache.tokens[size_t(row)]);
        }

        VarPtr style_tok = reshape(
            linear(constant(std::move(style_rows)), res.pipeline.style_proj.W,
                   res.pipeline.style_proj.b),
            {N, 1, res.pipeline.d_model});
        VarPtr text_tok = res.pipeline.text_proj.fwd(res.pipeline.text_encoder.fwd(tokens));
        VarPtr ctx = concat_seq(style_tok, text_tok);
        const Tensor mask = make_ctx_mask(tokens);

        VarPtr loss = training_loss(z0, ctx, mask, *res.pipeline.denoiser,
                                    res.pipeline.schedule, rng);
        const double lv = loss->scalar();
        if (!std::isfinite(lv)) {
            restore_snapshot();
            res.aborted_non_finite = true;
            return res;
        }
        opt.zero_grad();
        backward(loss);
        opt.step();
        res.step_loss.push_back(lv);
        if ((step + 1) % config.snapshot_every == 0) take_snapshot();
    }
    res.opt.m = opt.m;
    res.opt.v = opt.v;
    res.opt.t = opt.t;
    res.opt.next_step = config.train_steps;
    return res;
}

Tensor sample_latent(const GenerationRequest& request, const DiffusionPipeline& pipeline) {
    if (request.steps < 1) throw ConfigError("sample: steps must be >= 1");
    const TokenizedText tokens = tokenize(request.text);

    StyleEmbedding s_emb;
    if (request.style)
        s_emb = *request.style;
    else if (request.exemplars)
        s_emb = pipeline.embed_exemplars(*request.exemplars);
    else
        throw DataError("sample: request needs exemplars or a style embedding");

    NoGrad ng;
    const ConditionBundle cb = pipeline.build_conditions(s_emb, tokens);
    Tensor ctx({1, 1 + kLMax, pipeline.d_model});
    std::copy(cb.style.v.begin(), cb.style.v.end(), ctx.v.begin());
    std::copy(cb.text.v.begin(), cb.text.v.end(), ctx.v.begin() + pipeline.d_model);
    const Tensor mask = make_ctx_mask({tokens});
    VarPtr ctx_var = constant(std::move(ctx));

    Rng rng(request.seed);
    Tensor z = request.init_latent ? *request.init_latent : randn_latent(rng);
    if (z.shape != std::vector<int>{kLatentC, kLatentH, kLatentW})
        throw CheckpointError("init latent shape " + z.shape_str() + " does not match codec grid");

    const auto ts = sampling_timesteps(pipeline.schedule.T, request.steps);
    return ddim_chain(
        z,
        [&](const Tensor& z_t, int t) {
            VarPtr eps_hat = pipeline.denoiser->fwd(
                leaf(z_t.reshaped({1, kLatentC, kLatentH, kLatentW})), {t}, ctx_var, mask);
            return eps_hat->val.reshaped({kLatentC, kLatentH, kLatentW});
        },
        ts, pipeline.schedule);
}

Raster sample(const GenerationRequest& request, const DiffusionPipeline& pipeline) {
    LatentGrid z;
    z.values = sample_latent(request, pipeline);
    z.scale_tag = pipeline.codec->tag();
    return pipeline.codec->decode(z);
}

void save_diffusion(const DiffusionPipeline& pipeline, const std::string& path,
                    const nlohmann::json& extra_meta, const OptimState* opt) {
    Checkpoint ck;
    ck.format = "diffusion";
    ck.meta["d_model"] = pipeline.d_model;
    ck.meta["d_text"] = pipeline.text_encoder.d_text;
    ck.meta["unet.widths"] = pipeline.denoiser->cfg.widths;
    ck.meta["unet.temb_dim"] = pipeline.denoiser->cfg.temb_dim;
    ck.meta["unet.groups"] = pipeline.denoiser->cfg.groups;
    ck.meta["schedule.T"] = pipeline.schedule.T;
    ck.meta["schedule.beta_start"] = pipeline.schedule.beta_start;
    ck.meta["schedule.beta_end"] = pipeline.schedule.beta_end;
    ck.meta["codec"] = pipeline.codec->tag();
    ck.meta["latent_shape"] = std::vector<int>{kLatentC, kLatentH, kLatentW};
    ck.meta["l_max"] = kLMax;
    ck.meta["charset"] = pipeline.charset.codepoints;
    ck.meta["charset_hash"] = pipeline.charset.hash();
    ck.meta["style.d"] = pipeline.style_encoder.d;
    ck.meta["style.backbone"] = pipeline.style_encoder.backbone->kind();
    ck.meta["style.widths"] =
        dynamic_cast<const TinyCnnBackbone&>(*pipeline.style_encoder.backbone).widths;
    ck.meta["config_echo"] = pipeline.config_echo;
    ck.meta["config_hash"] = pipeline.config_hash;
    for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;

    const NamedParams trainable = pipeline.trainable_params();
    ck.add_params(trainable);
    NamedParams style_named;
    for (auto& [k, p] : pipeline.style_encoder.named_params(false))
        style_named.push_back({"style." + k, p});
    ck.add_params(style_named);
    if (opt) {
        ck.meta["opt.t"] = opt->t;
        ck.meta["train.next_step"] = opt->next_step;
        for (size_t i = 0; i < trainable.size(); ++i) {
            ck.add("opt.m." + trainable[i].first, opt->m[i]);
            ck.add("opt.v." + trainable[i].first, opt->v[i]);
        }
    }
    ck.save(path);
}

DiffusionPipeline load_diffusion(const std::string& path) {
    const Checkpoint ck = Checkpoint::load(path, "diffusion");
    Rng dummy(0);
    DiffusionPipeline p;
    p.d_model = ck.meta.at("d_model").get<int>();

    UNetConfig ucfg;
    ucfg.widths = ck.meta.at("unet.widths").get<std::vector<int>>();
    ucfg.d_model = p.d_model;
    ucfg.temb_dim = ck.meta.at("unet.temb_dim").get<int>();
    ucfg.groups = ck.meta.at("unet.groups").get<int>();
    p.denoiser = std::make_shared<UNetDenoiser>(ucfg, dummy);

    p.text_encoder = CharTextEncoder(ck.meta.at("d_text").get<int>(), dummy);
    const int style_d = ck.meta.at("style.d").get<int>();
    p.style_proj = Linear(style_d, p.d_model, dummy);
    p.text_proj = Linear(ck.meta.at("d_text").get<int>(), p.d_model, dummy);
    p.schedule = make_schedule(ck.meta.at("schedule.T").get<int>(),
                               ck.meta.at("schedule.beta_start").get<double>(),
                               ck.meta.at("schedule.beta_end").get<double>());
    p.codec = make_codec(ck.meta.at("codec").get<std::string>());
    const auto lat = ck.meta.at("latent_shape").get<std::vector<int>>();
    if (lat != std::vector<int>{kLatentC, kLatentH, kLatentW})
        throw CheckpointError("checkpoint latent shape does not match this codec build");
    p.charset.codepoints = ck.meta.at("charset").get<std::vector<uint32_t>>();
    if (ck.meta.contains("charset_hash") &&
        ck.meta.at("charset_hash").get<uint64_t>() != p.charset.hash())
        throw CheckpointError("checkpoint charset hash mismatch");

    p.style_encoder.d = style_d;
    p.style_encoder.backbone =
        make_backbone(ck.meta.at("style.backbone").get<std::string>() == "tiny_cnn"
                          ? "tiny_cnn"
                          : ck.meta.at("style.backbone").get<std::string>(),
                      ck.meta.at("style.widths").get<std::vector<int>>(), style_d, dummy);
    p.style_encoder.classifier = Linear(style_d, 1, dummy);  // unused at sampling time

    ck.load_params(p.trainable_params());
    NamedParams style_named;
    for (auto& [k, pp] : p.style_encoder.named_params(false))
        style_named.push_back({"style." + k, pp});
    ck.load_params(style_named);

    p.config_echo = ck.meta.value("config_echo", nlohmann::json::object());
    p.config_hash = ck.meta.value("config_hash", "");
    return p;
}

RegenResult regenerate_corpus(const DatasetManifest& src, const DiffusionPipeline& pipeline,
                              const std::string& out_dir, const RegenOptions& opts) {
    fs::create_directories(fs::path(out_dir) / "images");
    RegenResult res;
    res.manifest.charset = src.charset;
    res.manifest.base_dir = out_dir;

    for (size_t i = 0; i < src.entries.size(); ++i) {
        const auto& entry = src.entries[i];
        Rng entry_rng(mix_seed(opts.seed, 0x9e9e, i));
        try {
            ExemplarSet ex = sample_exemplars(src, entry.writer_id, opts.k, entry_rng);
            StyleEmbedding s_emb = pipeline.embed_exemplars(ex);
            if (opts.style_noise > 0.0) s_emb = perturb_style(s_emb, opts.style_noise, entry_rng);

            std::optional<Tensor> init;
            if (opts.noise_bias) {
                // a noised image of the same writer replaces the Gaussian prior
                std::vector<size_t> pool;
                for (size_t j = 0; j < src.entries.size(); ++j)
                    if (src.entries[j].writer_id == entry.writer_id) pool.push_back(j);
                const Raster bias_img = load_canonical(src, pool[entry_rng.next_below(pool.size())]);
                init = noise_bias_init(bias_img, pipeline.schedule.T, *pipeline.codec,
                                       pipeline.schedule, entry_rng);
            }

            const auto cps = utf8_decode(entry.transcription);
            std::vector<std::string> parts;
            if (int(cps.size()) > kLMax)
                parts = segment_long_word(entry.transcription, kLMax);
            else
                parts = {entry.transcription};

            std::vector<Raster> part_imgs;
            for (size_t pi = 0; pi < parts.size(); ++pi) {
                GenerationRequest req;
                req.text = parts[pi];
                req.style = s_emb;
                req.steps = opts.steps;
                req.seed = mix_seed(opts.seed, i, pi);
                if (pi == 0) req.init_latent = init;
                part_imgs.push_back(sample(req, pipeline));
            }
            Raster img = part_imgs.size() == 1 ? part_imgs[0]
                                               : canonicalize_image(compose_strip(part_imgs, 12));

            char name[64];
            std::snprintf(name, sizeof name, "images/%05zu.png", i);
            save_png((fs::path(out_dir) / name).string(), img,
                     {{"confighash", pipeline.config_hash}});

            ManifestEntry ge;
            ge.image_path = name;
            ge.transcription = entry.transcription;
            ge.writer_id = entry.writer_id;
            ge.split = entry.split;
            res.manifest.entries.push_back(std::move(ge));
        } catch (const std::exception& e) {
            res.failures.push_back("entry " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    save_manifest((fs::path(out_dir) / "manifest.tsv").string(), res.manifest);

    nlohmann::json meta;
    meta["config_echo"] = pipeline.config_echo;
    meta["config_hash"] = pipeline.config_hash;
    meta["style_noise"] = opts.style_noise;
    meta["noise_bias"] = opts.noise_bias;
    meta["k"] = opts.k;
    meta["steps"] = opts.steps;
    meta["seed"] = opts.seed;
    meta["failures"] = res.failures;
    const std::string tmp = (fs::path(out_dir) / "gen_meta.json.tmp").string();
    {
        std::ofstream f(tmp, std::ios::trunc);
        f << meta.dump(2) << "\n";
    }
    std::rename(tmp.c_str(), (fs::path(out_dir) / "gen_meta.json").string().c_str());
    return res;
}

}  // namespace hwgen
