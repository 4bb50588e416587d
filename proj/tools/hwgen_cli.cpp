// hwgen: train, sample and evaluate styled handwriting generation models.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 checkpoint error,
// 5 numeric failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hwgen/config.hpp"
#include "hwgen/diffusion.hpp"
#include "hwgen/gridio.hpp"
#include "hwgen/metrics.hpp"
#include "hwgen/recognizer.hpp"

namespace fs = std::filesystem;
using namespace hwgen;

namespace {

// relative output paths land under $HWGEN_ROOT when it is set
std::string out_path(const std::string& path) {
    const char* root = std::getenv("HWGEN_ROOT");
    if (!root || !*root || fs::path(path).is_absolute()) return path;
    fs::create_directories(root);
    return (fs::path(root) / path).string();
}

void write_json_atomic(const std::string& path, const nlohmann::json& j) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw DataError("cannot write: " + tmp);
        f << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot rename to: " + path);
}

DatasetManifest load_input_manifest(const RunConfig& cfg, const std::string& manifest_path,
                                    const std::string& charset_file) {
    std::optional<Charset> cs;
    if (!charset_file.empty()) cs = Charset::from_file(charset_file);
    (void)cfg;
    return load_manifest(manifest_path, cs);
}

StyleTrainConfig style_cfg_of(const RunConfig& cfg) {
    StyleTrainConfig out;
    out.epochs = cfg.get_int("style_train.epochs");
    out.batch_size = cfg.get_int("style_train.batch");
    out.lr = cfg.get_double("style_train.lr");
    out.lr_decay = cfg.get_double("style_train.lr_decay");
    out.lr_step_epochs = cfg.get_int("style_train.lr_step_epochs");
    out.weight_decay = cfg.get_double("style_train.weight_decay");
    out.margin = float(cfg.get_double("style_train.margin"));
    out.p_norm = float(cfg.get_double("style_train.p"));
    out.variant = parse_loss_variant(cfg.get_str("style_train.variant"));
    out.seed = cfg.get_seed();
    out.widths = cfg.get_ints("model.style_widths");
    out.d = cfg.get_int("model.d");
    out.backbone = cfg.get_str("model.backbone");
    return out;
}

DiffusionTrainConfig diffusion_cfg_of(const RunConfig& cfg) {
    DiffusionTrainConfig out;
    out.train_steps = cfg.get_int("diffusion.train_steps");
    out.batch = cfg.get_int("diffusion.batch");
    out.lr = cfg.get_double("diffusion.lr");
    out.weight_decay = cfg.get_double("diffusion.weight_decay");
    out.T = cfg.get_int("diffusion.T");
    out.beta_start = cfg.get_double("diffusion.beta_start");
    out.beta_end = cfg.get_double("diffusion.beta_end");
    out.k = cfg.get_int("sample.k");
    out.unet.widths = cfg.get_ints("model.unet_widths");
    out.unet.d_model = cfg.get_int("model.d_model");
    out.unet.temb_dim = cfg.get_int("model.temb_dim");
    out.unet.groups = cfg.get_int("model.groups");
    out.d_text = cfg.get_int("model.d_text");
    out.codec = cfg.get_str("diffusion.codec");
    out.seed = cfg.get_seed();
    return out;
}

// k-shot style embedding from a directory of exemplar images
StyleEmbedding style_from_dir(const DiffusionPipeline& pipeline, const std::string& dir, int k,
                              Rng& rng) {
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw DataError("style directory not found: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm") files.push_back(e.path().string());
    }
    if (files.empty()) throw DataError("no images in style directory: " + dir);
    std::sort(files.begin(), files.end());

    std::vector<size_t> chosen;
    if (int(files.size()) >= k) {
        std::vector<size_t> idx(files.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (int i = 0; i < k; ++i) {
            const size_t j = size_t(i) + rng.next_below(idx.size() - size_t(i));
            std::swap(idx[size_t(i)], idx[j]);
            chosen.push_back(idx[size_t(i)]);
        }
    } else {
        for (size_t i = 0; i < files.size(); ++i) chosen.push_back(i);
        while (int(chosen.size()) < k) chosen.push_back(rng.next_below(files.size()));
    }
    std::vector<StyleEmbedding> embs;
    for (size_t i : chosen)
        embs.push_back(embed_style(pipeline.style_encoder, canonicalize_image(load_image(files[i]))));
    return aggregate_exemplars(embs);
}

// generates one word image, segmenting text longer than the tokenizer budget
Raster generate_word(const DiffusionPipeline& pipeline, const std::string& text,
                     const StyleEmbedding& style, int steps, uint64_t seed,
                     const std::optional<Tensor>& init_latent) {
    const auto cps = utf8_decode(text);
    std::vector<std::string> parts =
        int(cps.size()) > kLMax ? segment_long_word(text, kLMax) : std::vector<std::string>{text};
    std::vector<Raster> images;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        GenerationRequest req;
        req.text = parts[pi];
        req.style = style;
        req.steps = steps;
        req.seed = seed + pi * 0x9E3779B97F4A7C15ull;
        if (pi == 0) req.init_latent = init_latent;
        images.push_back(sample(req, pipeline));
    }
    if (images.size() == 1) return images[0];
    return canonicalize_image(compose_strip(images, 12));
}

int run(int argc, char** argv) {
    CLI::App app{"styled handwritten text generation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_file;
    std::vector<std::string> overrides;
    app.add_option("--config", config_file, "config file (key = value lines)");
    app.add_option("--set", overrides, "override config keys, e.g. --set model.d=128")
        ->allow_extra_args(false);

    // ---- train-style ----
    auto* ts = app.add_subcommand("train-style", "train the hybrid style encoder");
    std::string ts_manifest, ts_charset, ts_out = "style.ckpt", ts_variant;
    int ts_epochs = -1;
    long long ts_seed = -1;
    ts->add_option("--manifest", ts_manifest)->required();
    ts->add_option("--charset-file", ts_charset);
    ts->add_option("--out", ts_out);
    ts->add_option("--epochs", ts_epochs);
    ts->add_option("--variant", ts_variant)->check(CLI::IsMember({"hybrid", "class", "triplet"}));
    ts->add_option("--seed", ts_seed);

    // ---- train-diffusion ----
    auto* td = app.add_subcommand("train-diffusion", "train the conditional denoiser");
    std::string td_manifest, td_charset, td_style, td_out = "diffusion.ckpt", td_resume;
    int td_steps = -1;
    long long td_seed = -1;
    td->add_option("--manifest", td_manifest)->required();
    td->add_option("--charset-file", td_charset);
    td->add_option("--style-ckpt", td_style)->required();
    td->add_option("--out", td_out);
    td->add_option("--steps", td_steps);
    td->add_option("--resume", td_resume);
    td->add_option("--seed", td_seed);

    // ---- sample ----
    auto* sp = app.add_subcommand("sample", "generate one word image");
    std::string sp_ckpt, sp_text, sp_style_dir, sp_out, sp_bias_image;
    double sp_style_noise = 0.0;
    bool sp_noise_bias = false;
    int sp_steps = -1, sp_k = -1;
    long long sp_seed = 0;
    sp->add_option("--ckpt", sp_ckpt)->required();
    sp->add_option("--text", sp_text)->required();
    sp->add_option("--style-dir", sp_style_dir)->required();
    sp->add_option("--out", sp_out);
    sp->add_option("--seed", sp_seed);
    sp->add_option("--steps", sp_steps);
    sp->add_option("--k", sp_k);
    sp->add_option("--style-noise", sp_style_noise, "noise magnitude added to the style embedding");
    sp->add_flag("--noise-bias", sp_noise_bias, "start from a noised exemplar instead of pure noise");
    sp->add_option("--noise-bias-image", sp_bias_image);

    // ---- interpolate ----
    auto* ip = app.add_subcommand("interpolate", "sweep between two styles");
    std::string ip_ckpt, ip_text, ip_a, ip_b, ip_out = "interpolate.png", ip_weights = "0,0.25,0.5,0.75,1";
    int ip_steps = -1, ip_k = -1;
    long long ip_seed = 0;
    ip->add_option("--ckpt", ip_ckpt)->required();
    ip->add_option("--text", ip_text)->required();
    ip->add_option("--style-a", ip_a)->required();
    ip->add_option("--style-b", ip_b)->required();
    ip->add_option("--weights", ip_weights);
    ip->add_option("--out", ip_out);
    ip->add_option("--seed", ip_seed);
    ip->add_option("--steps", ip_steps);
    ip->add_option("--k", ip_k);

    // ---- mix ----
    auto* mx = app.add_subcommand("mix", "condition on a weighted mixture of styles");
    std::string mx_ckpt, mx_text, mx_styles, mx_weights, mx_out;
    int mx_steps = -1, mx_k = -1;
    long long mx_seed = 0;
    mx->add_option("--ckpt", mx_ckpt)->required();
    mx->add_option("--text", mx_text)->required();
    mx->add_option("--styles", mx_styles, "comma-separated style directories (up to 5 typical)")->required();
    mx->add_option("--weights", mx_weights)->required();
    mx->add_option("--out", mx_out);
    mx->add_option("--seed", mx_seed);
    mx->add_option("--steps", mx_steps);
    mx->add_option("--k", mx_k);

    // ---- regenerate ----
    auto* rg = app.add_subcommand("regenerate", "re-synthesize every manifest entry");
    std::string rg_manifest, rg_charset, rg_ckpt, rg_out_dir, rg_split = "all";
    double rg_style_noise = 0.0;
    bool rg_noise_bias = false;
    int rg_steps = -1, rg_k = -1;
    long long rg_seed = 0;
    rg->add_option("--manifest", rg_manifest)->required();
    rg->add_option("--charset-file", rg_charset);
    rg->add_option("--ckpt", rg_ckpt)->required();
    rg->add_option("--out-dir", rg_out_dir)->required();
    rg->add_option("--seed", rg_seed);
    rg->add_option("--steps", rg_steps);
    rg->add_option("--k", rg_k);
    rg->add_option("--style-noise", rg_style_noise);
    rg->add_flag("--noise-bias", rg_noise_bias);
    rg->add_option("--split", rg_split)->check(CLI::IsMember({"all", "train", "test_seen_style", "test_unseen_style"}));

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "score a generated corpus against the real one");
    std::string ev_real, ev_gen, ev_metrics = "fid,mssim,rmse,writer", ev_report = "report.json";
    std::string ev_classifier, ev_charset;
    ev->add_option("--real-manifest", ev_real)->required();
    ev->add_option("--gen-manifest", ev_gen)->required();
    ev->add_option("--metrics", ev_metrics);
    ev->add_option("--report", ev_report);
    ev->add_option("--classifier", ev_classifier, "writer classifier checkpoint (trained if absent)");
    ev->add_option("--charset-file", ev_charset);

    // ---- compose ----
    auto* cp = app.add_subcommand("compose", "lay words out as trimmed strips and lines");
    std::string cp_ckpt, cp_words, cp_style_dir, cp_out = "compose.png";
    int cp_gap = -1, cp_line_width = -1, cp_steps = -1, cp_k = -1;
    long long cp_seed = 0;
    cp->add_option("--ckpt", cp_ckpt)->required();
    cp->add_option("--words", cp_words)->required();
    cp->add_option("--style-dir", cp_style_dir)->required();
    cp->add_option("--gap", cp_gap);
    cp->add_option("--line-width", cp_line_width);
    cp->add_option("--out", cp_out);
    cp->add_option("--seed", cp_seed);
    cp->add_option("--steps", cp_steps);
    cp->add_option("--k", cp_k);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }

    auto apply_int = [&cfg](const char* key, long long v) {
        if (v >= 0) cfg.set(key, std::to_string(v));
    };

    if (*ts) {
        apply_int("style_train.epochs", ts_epochs);
        apply_int("seed", ts_seed);
        if (!ts_variant.empty()) cfg.set("style_train.variant", ts_variant);
        DatasetManifest manifest = load_input_manifest(cfg, ts_manifest, ts_charset);
        StyleTrainResult res = train_style_encoder(manifest, style_cfg_of(cfg));
        if (res.aborted_non_finite) {
            // keep the last good weights on disk before failing
            save_style_encoder(res.model, out_path(ts_out) + ".lastgood");
            throw NumericError("style training hit a non-finite loss; last good checkpoint kept at " +
                               out_path(ts_out) + ".lastgood");
        }

        nlohmann::json extra;
        extra["config_echo"] = cfg.to_json();
        extra["config_hash"] = cfg.hash();
        extra["variant"] = cfg.get_str("style_train.variant");
        extra["d_model"] = cfg.get_int("model.d_model");
        const std::string out = out_path(ts_out);
        save_style_encoder(res.model, out, extra);

        nlohmann::json log;
        log["epoch_loss"] = res.epoch_loss;
        log["epoch_class"] = res.epoch_class;
        log["epoch_triplet"] = res.epoch_triplet;
        log["train_accuracy"] = res.final_train_accuracy;
        log["config_echo"] = cfg.to_json();
        log["config_hash"] = cfg.hash();
        write_json_atomic(out + ".log.json", log);
        std::cout << "style encoder saved to " << out << " (train acc "
                  << res.final_train_accuracy << ")\n";
        return 0;
    }

    if (*td) {
        apply_int("diffusion.train_steps", td_steps);
        apply_int("seed", td_seed);
        DatasetManifest manifest = load_input_manifest(cfg, td_manifest, td_charset);
        StyleEncoderModel frozen = load_style_encoder(td_style);
        DiffusionTrainResult res =
            train_diffusion(manifest, frozen, diffusion_cfg_of(cfg), td_resume);
        if (res.aborted_non_finite) {
            save_diffusion(res.pipeline, out_path(td_out) + ".lastgood");
            throw NumericError("diffusion training hit a non-finite loss; last good checkpoint kept at " +
                               out_path(td_out) + ".lastgood");
        }
        res.pipeline.config_echo = cfg.to_json();
        res.pipeline.config_hash = cfg.hash();
        const std::string out = out_path(td_out);
        save_diffusion(res.pipeline, out, {}, &res.opt);

        nlohmann::json log;
        log["step_loss"] = res.step_loss;
        log["config_echo"] = cfg.to_json();
        log["config_hash"] = cfg.hash();
        write_json_atomic(out + ".log.json", log);
        std::cout << "diffusion checkpoint saved to " << out << "\n";
        return 0;
    }

    if (*sp) {
        apply_int("sample.steps", sp_steps);
        apply_int("sample.k", sp_k);
        DiffusionPipeline pipeline = load_diffusion(sp_ckpt);
        Rng rng{uint64_t(sp_seed)};
        StyleEmbedding style = style_from_dir(pipeline, sp_style_dir, cfg.get_int("sample.k"), rng);
        std::string variant = "plain";
        if (sp_style_noise > 0.0) {
            style = perturb_style(style, sp_style_noise, rng);
            variant = "noise" + std::to_string(sp_style_noise).substr(0, 4);
        }
        std::optional<Tensor> init;
        if (sp_noise_bias || !sp_bias_image.empty()) {
            Raster bias;
            if (!sp_bias_image.empty()) {
                bias = canonicalize_image(load_image(sp_bias_image));
            } else {
                std::vector<std::string> files;
                for (const auto& e : fs::directory_iterator(sp_style_dir))
                    if (e.path().extension() == ".png") files.push_back(e.path().string());
                std::sort(files.begin(), files.end());
                bias = canonicalize_image(load_image(files[rng.next_below(files.size())]));
            }
            init = noise_bias_init(bias, pipeline.schedule.T, *pipeline.codec, pipeline.schedule,
                                   rng);
            variant = variant == "plain" ? "bias" : variant + "-bias";
        }
        Raster img = generate_word(pipeline, sp_text, style, cfg.get_int("sample.steps"),
                                   uint64_t(sp_seed), init);
        std::string out = sp_out;
        if (out.empty()) {
            const std::string writer = fs::path(sp_style_dir).filename().string();
            out = sp_text + "_" + (writer.empty() ? "style" : writer) + "_" + variant + "_" +
                  std::to_string(sp_seed) + ".png";
        }
        out = out_path(out);
        save_png(out, img, {{"confighash", pipeline.config_hash.empty() ? cfg.hash()
                                                                        : pipeline.config_hash}});
        std::cout << "sample written to " << out << "\n";
        return 0;
    }

    if (*ip) {
        apply_int("sample.steps", ip_steps);
        apply_int("sample.k", ip_k);
        DiffusionPipeline pipeline = load_diffusion(ip_ckpt);
        Rng rng_a{uint64_t(ip_seed)};
        Rng rng_b{uint64_t(ip_seed) + 1};
        StyleEmbedding sa = style_from_dir(pipeline, ip_a, cfg.get_int("sample.k"), rng_a);
        StyleEmbedding sb = style_from_dir(pipeline, ip_b, cfg.get_int("sample.k"), rng_b);

        std::vector<double> weights;
        std::stringstream ss(ip_weights);
        std::string item;
        while (std::getline(ss, item, ',')) weights.push_back(std::stod(item));
        if (weights.empty()) throw ConfigError("interpolate: empty weight list");

        std::vector<Raster> row;
        std::vector<std::string> col_labels;
        for (double w : weights) {
            StyleEmbedding mix = interpolate_styles(sa, sb, w);
            row.push_back(generate_word(pipeline, ip_text, mix, cfg.get_int("sample.steps"),
                                        uint64_t(ip_seed), std::nullopt));
            char label[16];
            std::snprintf(label, sizeof label, "w=%.2f", w);
            col_labels.push_back(label);
        }
        const std::string out = out_path(ip_out);
        emit_grid({row}, {ip_text}, col_labels, out,
                  {{"confighash", pipeline.config_hash.empty() ? cfg.hash() : pipeline.config_hash}});
        std::cout << "interpolation grid written to " << out << "\n";
        return 0;
    }

    if (*mx) {
        apply_int("sample.steps", mx_steps);
        apply_int("sample.k", mx_k);
        DiffusionPipeline pipeline = load_diffusion(mx_ckpt);
        std::vector<std::string> dirs;
        std::stringstream ds(mx_styles);
        std::string item;
        while (std::getline(ds, item, ',')) dirs.push_back(item);
        std::vector<double> weights;
        std::stringstream ws(mx_weights);
        while (std::getline(ws, item, ',')) weights.push_back(std::stod(item));

        std::vector<StyleEmbedding> styles;
        for (size_t i = 0; i < dirs.size(); ++i) {
            Rng rng(uint64_t(mx_seed) + i * 1315423911ull);
            styles.push_back(style_from_dir(pipeline, dirs[i], cfg.get_int("sample.k"), rng));
        }
        StyleEmbedding mixed = mix_styles(styles, weights);
        Raster img = generate_word(pipeline, mx_text, mixed, cfg.get_int("sample.steps"),
                                   uint64_t(mx_seed), std::nullopt);
        std::string out = mx_out.empty()
                              ? mx_text + "_mix_" + std::to_string(dirs.size()) + "styles_" +
                                    std::to_string(mx_seed) + ".png"
                              : mx_out;
        out = out_path(out);
        save_png(out, img, {{"confighash", pipeline.config_hash.empty() ? cfg.hash()
                                                                        : pipeline.config_hash}});
        std::cout << "mixture sample written to " << out << "\n";
        return 0;
    }

    if (*rg) {
        apply_int("sample.steps", rg_steps);
        apply_int("sample.k", rg_k);
        DatasetManifest manifest = load_input_manifest(cfg, rg_manifest, rg_charset);
        if (rg_split != "all") {
            DatasetManifest filtered;
            filtered.charset = manifest.charset;
            filtered.base_dir = manifest.base_dir;
            for (const auto& e : manifest.entries)
                if (split_name(e.split) == rg_split) filtered.entries.push_back(e);
            manifest = std::move(filtered);
        }
        DiffusionPipeline pipeline = load_diffusion(rg_ckpt);
        RegenOptions opts;
        opts.style_noise = rg_style_noise;
        opts.noise_bias = rg_noise_bias;
        opts.k = cfg.get_int("sample.k");
        opts.steps = cfg.get_int("sample.steps");
        opts.seed = uint64_t(rg_seed);
        RegenResult res = regenerate_corpus(manifest, pipeline, out_path(rg_out_dir), opts);
        std::cout << "regenerated " << res.manifest.entries.size() << " entries, "
                  << res.failures.size() << " failures -> " << out_path(rg_out_dir) << "\n";
        for (const auto& f : res.failures) std::cerr << "  " << f << "\n";
        return 0;
    }

    if (*ev) {
        DatasetManifest real = load_input_manifest(cfg, ev_real, ev_charset);
        DatasetManifest gen = load_input_manifest(cfg, ev_gen, ev_charset);

        std::set<std::string> metrics;
        std::stringstream ms(ev_metrics);
        std::string item;
        while (std::getline(ms, item, ',')) metrics.insert(item);
        for (const auto& m : metrics)
            if (m != "fid" && m != "mssim" && m != "rmse" && m != "writer" && m != "htr")
                throw ConfigError("unknown metric '" + m + "' (expected fid,mssim,rmse,writer,htr)");

        MetricReport report;
        report.config_echo = cfg.to_json();
        report.config_hash = cfg.hash();
        report.n_real = int(real.entries.size());
        report.n_gen = int(gen.entries.size());

        auto load_all = [](const DatasetManifest& m) {
            std::vector<Raster> out;
            for (size_t i = 0; i < m.entries.size(); ++i) out.push_back(load_canonical(m, i));
            return out;
        };

        std::optional<WriterClassifier> classifier;
        auto ensure_classifier = [&]() -> WriterClassifier& {
            if (!classifier) {
                if (!ev_classifier.empty()) {
                    classifier = WriterClassifier::load(ev_classifier);
                } else {
                    ClassifierTrainConfig ccfg;
                    ccfg.seed = cfg.get_seed();
                    std::cout << "training writer classifier on the real train split...\n";
                    classifier = train_writer_classifier(real, ccfg);
                }
            }
            return *classifier;
        };

        if (metrics.count("fid")) {
            const std::string kind = cfg.get_str("eval.fid_features");
            std::vector<Raster> ri = load_all(real), gi = load_all(gen);
            if (kind == "identity") {
                report.fid = compute_fid(ri, gi, IdentityExtractor{});
            } else if (kind == "pooled") {
                report.fid = compute_fid(ri, gi, PooledExtractor{});
            } else if (kind == "classifier") {
                report.fid = compute_fid(ri, gi, ClassifierExtractor{ensure_classifier()});
            } else {
                throw ConfigError("eval.fid_features must be identity|pooled|classifier");
            }
        }
        if (metrics.count("mssim") || metrics.count("rmse")) {
            if (real.entries.size() != gen.entries.size())
                throw DataError("mssim/rmse need aligned manifests of equal length");
            for (size_t i = 0; i < real.entries.size(); ++i)
                if (real.entries[i].transcription != gen.entries[i].transcription ||
                    real.entries[i].writer_id != gen.entries[i].writer_id)
                    throw DataError("manifest entries disagree at line " + std::to_string(i + 1));
            std::vector<Raster> ri = load_all(real), gi = load_all(gen);
            if (metrics.count("mssim")) report.mssim = mssim(ri, gi);
            if (metrics.count("rmse")) report.rmse = rmse(ri, gi);
        }
        if (metrics.count("writer")) {
            report.writer_acc = writer_fidelity(gen, ensure_classifier());
        }
        if (metrics.count("htr")) {
            const int seeds = cfg.get_int("eval.htr_seeds");
            std::vector<double> cers, wers;
            for (int s = 0; s < seeds; ++s) {
                RecognizerTrainConfig rcfg;
                rcfg.hidden = cfg.get_int("htr.hidden");
                rcfg.epochs = cfg.get_int("htr.epochs");
                rcfg.batch = cfg.get_int("htr.batch");
                rcfg.lr = cfg.get_double("htr.lr");
                rcfg.seed = cfg.get_seed() + uint64_t(s);
                RecognizerTrainResult rt = ctc_train(gen, rcfg);
                HtrScores sc = evaluate_recognizer(rt.model, real, Split::TestSeenStyle);
                cers.push_back(sc.cer * 100.0);
                wers.push_back(sc.wer * 100.0);
            }
            auto mean_std = [](const std::vector<double>& v) {
                double m = 0;
                for (double x : v) m += x;
                m /= double(v.size());
                double var = 0;
                for (double x : v) var += (x - m) * (x - m);
                return std::pair<double, double>{m, v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0};
            };
            auto [cm, cs] = mean_std(cers);
            auto [wm, ws] = mean_std(wers);
            report.cer_mean = cm;
            report.cer_std = cs;
            report.wer_mean = wm;
            report.wer_std = ws;
        }
        const std::string out = out_path(ev_report);
        write_json_atomic(out, report.to_json());
        std::cout << "report written to " << out << "\n" << report.to_json().dump(2) << "\n";
        return 0;
    }

    if (*cp) {
        apply_int("sample.steps", cp_steps);
        apply_int("sample.k", cp_k);
        apply_int("compose.gap", cp_gap);
        apply_int("compose.line_width", cp_line_width);
        DiffusionPipeline pipeline = load_diffusion(cp_ckpt);
        Rng rng{uint64_t(cp_seed)};
        StyleEmbedding style = style_from_dir(pipeline, cp_style_dir, cfg.get_int("sample.k"), rng);

        std::vector<std::string> words;
        std::stringstream ws(cp_words);
        std::string word;
        while (ws >> word) words.push_back(word);
        if (words.empty()) throw DataError("compose: no words given");

        const int gap = cfg.get_int("compose.gap");
        const int line_width = cfg.get_int("compose.line_width");
        std::vector<Raster> lines;
        std::vector<Raster> line_words;
        int width = 0;
        auto flush = [&] {
            if (!line_words.empty()) {
                lines.push_back(compose_strip(line_words, gap));
                line_words.clear();
                width = 0;
            }
        };
        for (size_t i = 0; i < words.size(); ++i) {
            Raster img = generate_word(pipeline, words[i], style, cfg.get_int("sample.steps"),
                                       uint64_t(cp_seed) + i * 7919ull, std::nullopt);
            int top, left, bottom, right;
            const int w = ink_bbox(img, 0.5f, top, left, bottom, right) ? right - left + 1
                                                                        : img.w;
            if (width > 0 && width + gap + w > line_width) flush();
            line_words.push_back(img);
            width += (width > 0 ? gap : 0) + w;
        }
        flush();

        int total_w = 0;
        for (const auto& l : lines) total_w = std::max(total_w, l.w);
        const int line_gap = 12;
        Raster page(int(lines.size()) * (kCanonH + line_gap) - line_gap, total_w, kBackground);
        int y = 0;
        for (const auto& l : lines) {
            for (int i = 0; i < l.h; ++i)
                for (int j = 0; j < l.w; ++j) page.at(y + i, j) = l.at(i, j);
            y += kCanonH + line_gap;
        }
        const std::string out = out_path(cp_out);
        save_png(out, page, {{"confighash", pipeline.config_hash.empty() ? cfg.hash()
                                                                         : pipeline.config_hash}});
        std::cout << "composition written to " << out << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
