#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hwgen/diffusion.hpp"
#include "hwgen/metrics.hpp"
#include "hwgen/toydata.hpp"

namespace py = pybind11;
using namespace hwgen;

namespace {

Raster raster_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DataError("image array must be 2-D (h, w)");
    Raster img(int(a.shape(0)), int(a.shape(1)));
    std::copy_n(a.data(), img.px.size(), img.px.begin());
    return img;
}

py::array_t<float> array_from_raster(const Raster& img) {
    py::array_t<float> out({img.h, img.w});
    std::copy_n(img.px.data(), img.px.size(), out.mutable_data());
    return out;
}

Tensor latent_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(0) != kLatentC || a.shape(1) != kLatentH || a.shape(2) != kLatentW)
        throw NumericError("latent array must have shape (4, 8, 32)");
    Tensor t({kLatentC, kLatentH, kLatentW});
    std::copy_n(a.data(), t.v.size(), t.v.begin());
    return t;
}

py::array_t<float> array_from_latent(const Tensor& t) {
    py::array_t<float> out({kLatentC, kLatentH, kLatentW});
    std::copy_n(t.v.data(), t.v.size(), out.mutable_data());
    return out;
}

std::vector<float> vec_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    return std::vector<float>(a.data(), a.data() + a.size());
}

StyleEmbedding embedding_from_array(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
    Provenance prov = Provenance::Single) {
    if (a.ndim() != 1) throw NumericError("style embedding must be 1-D");
    StyleEmbedding e;
    e.values = Tensor({int(a.size())}, vec_from_array(a));
    e.provenance = prov;
    return e;
}

py::array_t<double> square_from_vec(const std::vector<double>& m, int n) {
    py::array_t<double> out({n, n});
    std::copy_n(m.data(), m.size(), out.mutable_data());
    return out;
}

std::vector<double> vecd_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return std::vector<double>(a.data(), a.data() + a.size());
}

}  // namespace

PYBIND11_MODULE(_hwgen, m) {
    m.doc() = "styled handwritten text generation: core operations";

    py::register_exception<ConfigError>(m, "HwgenConfigError");
    py::register_exception<DataError>(m, "HwgenDataError");
    py::register_exception<CheckpointError>(m, "HwgenCheckpointError");
    py::register_exception<NumericError>(m, "HwgenNumericError");

    m.attr("CANON_H") = kCanonH;
    m.attr("CANON_W") = kCanonW;
    m.attr("L_MAX") = kLMax;
    m.attr("LATENT_SHAPE") = py::make_tuple(kLatentC, kLatentH, kLatentW);

    // ---- images / dataset ----
    m.def("canonicalize_image", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
        return array_from_raster(canonicalize_image(raster_from_array(a)));
    });
    m.def("load_image", [](const std::string& path) { return array_from_raster(load_image(path)); });
    m.def("save_png", [](const std::string& path,
                         const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
        save_png(path, raster_from_array(a));
    });

    // ---- text ----
    m.def("tokenize", [](const std::string& text, int l_max) {
        TokenizedText t = tokenize(text, l_max);
        return py::make_tuple(t.token_ids, t.mask);
    }, py::arg("text"), py::arg("l_max") = kLMax);
    m.def("detokenize", [](const std::vector<int>& ids) {
        TokenizedText t;
        t.token_ids = ids;
        return detokenize(t);
    });
    m.def("segment_long_word", &segment_long_word, py::arg("word"), py::arg("max_len"));

    // ---- schedule / diffusion math ----
    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("T", &NoiseSchedule::T)
        .def_readonly("betas", &NoiseSchedule::betas)
        .def_readonly("alpha_bars", &NoiseSchedule::alpha_bars)
        .def("alpha_bar", &NoiseSchedule::alpha_bar);
    m.def("make_schedule", &make_schedule, py::arg("T"), py::arg("beta_start"), py::arg("beta_end"));
    m.def("sampling_timesteps", &sampling_timesteps, py::arg("T"), py::arg("steps"));
    m.def("q_sample", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& z0, int t,
                         const py::array_t<float, py::array::c_style | py::array::forcecast>& eps,
                         const NoiseSchedule& s) {
        return array_from_latent(q_sample(latent_from_array(z0), t, latent_from_array(eps), s));
    });
    m.def("ddim_step", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& z_t,
                          const py::array_t<float, py::array::c_style | py::array::forcecast>& eps_hat,
                          int t, int t_prev, const NoiseSchedule& s) {
        return array_from_latent(
            ddim_step(latent_from_array(z_t), latent_from_array(eps_hat), t, t_prev, s));
    });

    // ---- latent codec ----
    m.def("encode_latent", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
        StubCodec codec;
        return array_from_latent(codec.encode(raster_from_array(img)).values);
    });
    m.def("decode_latent", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& z) {
        StubCodec codec;
        LatentGrid g{latent_from_array(z), "stub"};
        return array_from_raster(codec.decode(g));
    });

    // ---- style space ----
    m.def("triplet_loss", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& fa,
                             const py::array_t<float, py::array::c_style | py::array::forcecast>& fp,
                             const py::array_t<float, py::array::c_style | py::array::forcecast>& fn,
                             float margin, float p) {
        Tensor a({1, int(fa.size())}, vec_from_array(fa));
        Tensor b({1, int(fp.size())}, vec_from_array(fp));
        Tensor c({1, int(fn.size())}, vec_from_array(fn));
        return triplet_loss(a, b, c, margin, p);
    }, py::arg("f_a"), py::arg("f_p"), py::arg("f_n"), py::arg("margin") = 1.f, py::arg("p") = 2.f);
    m.def("interpolate_styles", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                                   const py::array_t<float, py::array::c_style | py::array::forcecast>& b,
                                   double w) {
        StyleEmbedding out = interpolate_styles(embedding_from_array(a), embedding_from_array(b), w);
        py::array_t<float> r(out.values.numel());
        std::copy_n(out.values.v.data(), out.values.v.size(), r.mutable_data());
        return r;
    });
    m.def("mix_styles", [](const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& arrays,
                           const std::vector<double>& weights) {
        std::vector<StyleEmbedding> styles;
        for (const auto& a : arrays) styles.push_back(embedding_from_array(a));
        StyleEmbedding out = mix_styles(styles, weights);
        py::array_t<float> r(out.values.numel());
        std::copy_n(out.values.v.data(), out.values.v.size(), r.mutable_data());
        return r;
    });
    m.def("perturb_style", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& s,
                              double magnitude, uint64_t seed) {
        Rng rng(seed);
        StyleEmbedding out = perturb_style(embedding_from_array(s), magnitude, rng);
        py::array_t<float> r(out.values.numel());
        std::copy_n(out.values.v.data(), out.values.v.size(), r.mutable_data());
        return r;
    }, py::arg("style"), py::arg("magnitude"), py::arg("seed") = 0);

    // ---- metrics ----
    m.def("frechet_distance", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mu1,
                                 const py::array_t<double, py::array::c_style | py::array::forcecast>& s1,
                                 const py::array_t<double, py::array::c_style | py::array::forcecast>& mu2,
                                 const py::array_t<double, py::array::c_style | py::array::forcecast>& s2) {
        return frechet_distance(vecd_from_array(mu1), vecd_from_array(s1), vecd_from_array(mu2),
                                vecd_from_array(s2));
    });
    (void)square_from_vec;
    m.def("cer", &cer, py::arg("reference"), py::arg("hypothesis"));
    m.def("wer", &wer, py::arg("reference_words"), py::arg("hypothesis_words"));
    m.def("mssim", [](const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& a,
                      const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& b) {
        std::vector<Raster> ra, rb;
        for (const auto& x : a) ra.push_back(raster_from_array(x));
        for (const auto& x : b) rb.push_back(raster_from_array(x));
        return mssim(ra, rb);
    });
    m.def("rmse", [](const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& a,
                     const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& b) {
        std::vector<Raster> ra, rb;
        for (const auto& x : a) ra.push_back(raster_from_array(x));
        for (const auto& x : b) rb.push_back(raster_from_array(x));
        return rmse(ra, rb);
    });

    // ---- toy corpus ----
    m.def("render_toy_word", [](const std::string& word, int style) {
        return array_from_raster(render_toy_word(word, style));
    });
    m.def("make_toy_corpus", [](const std::string& out_dir, int writers, int train_words,
                                int test_words, bool unseen) {
        ToyCorpusConfig cfg;
        cfg.writers = writers;
        cfg.train_words_per_writer = train_words;
        cfg.test_words_per_writer = test_words;
        cfg.include_unseen_writer = unseen;
        return make_toy_corpus(out_dir, cfg);
    }, py::arg("out_dir"), py::arg("writers") = 4, py::arg("train_words") = 25,
       py::arg("test_words") = 5, py::arg("unseen") = true);

    // ---- trained pipeline ----
    py::class_<DiffusionPipeline>(m, "Pipeline")
        .def_static("load", &load_diffusion, py::arg("path"))
        .def_property_readonly("codec_tag",
                               [](const DiffusionPipeline& p) { return p.codec->tag(); })
        .def_property_readonly("T", [](const DiffusionPipeline& p) { return p.schedule.T; })
        .def("embed_style",
             [](const DiffusionPipeline& p,
                const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
                 StyleEmbedding e = embed_style(p.style_encoder, raster_from_array(img));
                 py::array_t<float> r(e.values.numel());
                 std::copy_n(e.values.v.data(), e.values.v.size(), r.mutable_data());
                 return r;
             })
        .def("sample",
             [](const DiffusionPipeline& p, const std::string& text,
                const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& exemplars,
                uint64_t seed, int steps, double style_noise) {
                 ExemplarSet set;
                 set.writer_id = "adhoc";
                 for (const auto& a : exemplars)
                     set.images.push_back(canonicalize_image(raster_from_array(a)));
                 GenerationRequest req;
                 req.text = text;
                 if (style_noise > 0.0) {
                     StyleEmbedding e = p.embed_exemplars(set);
                     Rng rng(seed ^ 0x5721u);
                     req.style = perturb_style(e, style_noise, rng);
                 } else {
                     req.exemplars = set;
                 }
                 req.seed = seed;
                 req.steps = steps;
                 return array_from_raster(sample(req, p));
             },
             py::arg("text"), py::arg("exemplars"), py::arg("seed") = 0, py::arg("steps") = 50,
             py::arg("style_noise") = 0.0);
}
