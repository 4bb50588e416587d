#include "hwgen/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hwgen/style_encoder.hpp"

namespace hwgen {

void symmetric_eig(const std::vector<double>& A, int n, std::vector<double>& eigvals,
                   std::vector<double>& eigvecs) {
    std::vector<double> a = A;       // working copy
    eigvecs.assign(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[size_t(i) * n + i] = 1.0;

    auto idx = [n](int i, int j) { return size_t(i) * n + j; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a[idx(i, j)] * a[idx(i, j)];
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[idx(p, q)];
                if (std::abs(apq) < 1e-18) continue;
                const double app = a[idx(p, p)], aqq = a[idx(q, q)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[idx(k, p)], akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[idx(p, k)], aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = eigvecs[idx(k, p)], vkq = eigvecs[idx(k, q)];
                    eigvecs[idx(k, p)] = c * vkp - s * vkq;
                    eigvecs[idx(k, q)] = s * vkp + c * vkq;
                }
            }
    }
    eigvals.resize(size_t(n));
    for (int i = 0; i < n; ++i) eigvals[size_t(i)] = a[idx(i, i)];
}

namespace {
void check_cov(const std::vector<double>& sigma, int n, const char* which) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = sigma[size_t(i) * n + j];
            if (!std::isfinite(v)) throw NumericError(std::string(which) + ": non-finite covariance");
            if (std::abs(v - sigma[size_t(j) * n + i]) > 1e-6)
                throw NumericError(std::string(which) + ": covariance not symmetric");
        }
}

// B = V diag(f(lambda)) V^T
std::vector<double> eig_apply(const std::vector<double>& eigvecs,
                              const std::vector<double>& eigvals, int n,
                              const std::function<double(double)>& f) {
    std::vector<double> out(size_t(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        const double fk = f(eigvals[size_t(k)]);
        if (fk == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            const double vik = eigvecs[size_t(i) * n + k] * fk;
            for (int j = 0; j < n; ++j) out[size_t(i) * n + j] += vik * eigvecs[size_t(j) * n + k];
        }
    }
    return out;
}
}  // namespace

double frechet_distance(const std::vector<double>& mu1, const std::vector<double>& sigma1,
                        const std::vector<double>& mu2, const std::vector<double>& sigma2) {
    const int n = int(mu1.size());
    if (mu2.size() != size_t(n) || sigma1.size() != size_t(n) * n || sigma2.size() != size_t(n) * n)
        throw NumericError("frechet_distance: dimension mismatch");
    for (double v : mu1)
        if (!std::isfinite(v)) throw NumericError("frechet_distance: non-finite mean");
    for (double v : mu2)
        if (!std::isfinite(v)) throw NumericError("frechet_distance: non-finite mean");
    check_cov(sigma1, n, "sigma1");
    check_cov(sigma2, n, "sigma2");

    double mean_term = 0.0, tr1 = 0.0, tr2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = mu1[size_t(i)] - mu2[size_t(i)];
        mean_term += d * d;
        tr1 += sigma1[size_t(i) * n + i];
        tr2 += sigma2[size_t(i) * n + i];
    }

    // sqrt(S1) via eigendecomposition, eigenvalues clipped at 0
    std::vector<double> vals, vecs;
    symmetric_eig(sigma1, n, vals, vecs);
    const auto s1_half =
        eig_apply(vecs, vals, n, [](double l) { return l > 0 ? std::sqrt(l) : 0.0; });

    // M = sqrt(S1) S2 sqrt(S1), symmetrized
    std::vector<double> tmp(size_t(n) * n, 0.0), M(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double v = s1_half[size_t(i) * n + k];
            if (v == 0.0) continue;
            for (int j = 0; j < n; ++j) tmp[size_t(i) * n + j] += v * sigma2[size_t(k) * n + j];
        }
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double v = tmp[size_t(i) * n + k];
            if (v == 0.0) continue;
            for (int j = 0; j < n; ++j) M[size_t(i) * n + j] += v * s1_half[size_t(k) * n + j];
        }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double s = 0.5 * (M[size_t(i) * n + j] + M[size_t(j) * n + i]);
            M[size_t(i) * n + j] = s;
            M[size_t(j) * n + i] = s;
        }
    symmetric_eig(M, n, vals, vecs);
    double tr_sqrt = 0.0;
    for (double l : vals) tr_sqrt += l > 0 ? std::sqrt(l) : 0.0;

    return mean_term + tr1 + tr2 - 2.0 * tr_sqrt;
}

std::vector<double> IdentityExtractor::extract(const Raster& img) const {
    return std::vector<double>(img.px.begin(), img.px.end());
}

std::vector<double> PooledExtractor::extract(const Raster& img) const {
    const int bh = std::max(1, img.h / 8), bw = std::max(1, img.w / 8);
    std::vector<double> out;
    out.reserve(size_t(bh) * bw);
    for (int bi = 0; bi < bh; ++bi)
        for (int bj = 0; bj < bw; ++bj) {
            double acc = 0.0;
            int count = 0;
            for (int i = bi * 8; i < std::min(img.h, (bi + 1) * 8); ++i)
                for (int j = bj * 8; j < std::min(img.w, (bj + 1) * 8); ++j) {
                    acc += img.at(i, j);
                    ++count;
                }
            out.push_back(acc / count);
        }
    return out;
}

namespace {
void gaussian_moments(const std::vector<Raster>& images, const FeatureExtractor& ex,
                      std::vector<double>& mu, std::vector<double>& sigma) {
    const size_t N = images.size();
    std::vector<std::vector<double>> feats;
    feats.reserve(N);
    for (const auto& img : images) feats.push_back(ex.extract(img));
    const size_t D = feats[0].size();
    for (const auto& f : feats)
        if (f.size() != D) throw NumericError("fid: inconsistent feature dims");
    mu.assign(D, 0.0);
    for (const auto& f : feats)
        for (size_t d = 0; d < D; ++d) mu[d] += f[d];
    for (auto& v : mu) v /= double(N);
    sigma.assign(D * D, 0.0);
    for (const auto& f : feats)
        for (size_t i = 0; i < D; ++i) {
            const double di = f[i] - mu[i];
            for (size_t j = i; j < D; ++j) sigma[i * D + j] += di * (f[j] - mu[j]);
        }
    for (size_t i = 0; i < D; ++i)
        for (size_t j = i; j < D; ++j) {
            const double v = sigma[i * D + j] / double(N - 1);  // unbiased
            sigma[i * D + j] = v;
            sigma[j * D + i] = v;
        }
}
}  // namespace

double compute_fid(const std::vector<Raster>& real_images, const std::vector<Raster>& gen_images,
                   const FeatureExtractor& extractor) {
    if (real_images.size() < 2 || gen_images.size() < 2)
        throw DataError("compute_fid: need at least 2 images on each side");
    std::vector<double> mu1, s1, mu2, s2;
    gaussian_moments(real_images, extractor, mu1, s1);
    gaussian_moments(gen_images, extractor, mu2, s2);
    return frechet_distance(mu1, s1, mu2, s2);
}

double ssim(const Raster& a, const Raster& b) {
    if (a.h != b.h || a.w != b.w) throw DataError("ssim: shape mismatch");
    const int win = 7;
    if (a.h < win || a.w < win) throw DataError("ssim: image smaller than window");
    const double k1 = 0.01, k2 = 0.03, L = 1.0;
    const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
    const double inv = 1.0 / (win * win);

    double acc = 0.0;
    int count = 0;
    for (int i = 0; i + win <= a.h; ++i)
        for (int j = 0; j + win <= a.w; ++j) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (int di = 0; di < win; ++di)
                for (int dj = 0; dj < win; ++dj) {
                    ma += a.at(i + di, j + dj);
                    mb += b.at(i + di, j + dj);
                }
            ma *= inv;
            mb *= inv;
            for (int di = 0; di < win; ++di)
                for (int dj = 0; dj < win; ++dj) {
                    const double da = a.at(i + di, j + dj) - ma;
                    const double db = b.at(i + di, j + dj) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            const double norm = 1.0 / (win * win - 1);
            va *= norm;
            vb *= norm;
            cov *= norm;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return acc / count;
}

double mssim(const std::vector<Raster>& images_a, const std::vector<Raster>& images_b) {
    if (images_a.empty() || images_a.size() != images_b.size())
        throw DataError("mssim: need equal non-empty image lists");
    double acc = 0.0;
    for (size_t i = 0; i < images_a.size(); ++i) acc += ssim(images_a[i], images_b[i]);
    return acc / double(images_a.size());
}

double rmse(const std::vector<Raster>& images_a, const std::vector<Raster>& images_b) {
    if (images_a.empty() || images_a.size() != images_b.size())
        throw DataError("rmse: need equal non-empty image lists");
    double acc = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i < images_a.size(); ++i) {
        const auto& a = images_a[i];
        const auto& b = images_b[i];
        if (a.h != b.h || a.w != b.w) throw DataError("rmse: shape mismatch at pair " + std::to_string(i));
        for (size_t p = 0; p < a.px.size(); ++p) {
            const double d = double(a.px[p]) - b.px[p];
            acc += d * d;
            ++count;
        }
    }
    return std::sqrt(acc / double(count));
}

WriterClassifier::WriterClassifier(const std::vector<int>& widths, int hidden_, int n_writers,
                                   Rng& rng)
    : hidden(hidden_) {
    int cin = 1;
    for (int w : widths) {
        convs.emplace_back(cin, w, 5, 5, 2, 2, 2, 2, rng);
        cin = w;
    }
    fc1 = Linear(cin, hidden, rng);
    fc2 = Linear(hidden, n_writers, rng);
}

VarPtr WriterClassifier::penultimate(const VarPtr& images) const {
    VarPtr x = images;
    for (const auto& c : convs) x = relu(c.fwd(x));
    return relu(fc1.fwd(global_avg_pool(x)));
}

VarPtr WriterClassifier::logits(const VarPtr& images) const { return fc2.fwd(penultimate(images)); }

std::string WriterClassifier::classify(const Raster& img) const {
    NoGrad ng;
    VarPtr l = logits(leaf(rasters_to_batch({img})));
    int best = 0;
    for (int c = 1; c < int(writers.size()); ++c)
        if (l->val.at2(0, c) > l->val.at2(0, best)) best = c;
    return writers[size_t(best)];
}

std::vector<double> WriterClassifier::features(const Raster& img) const {
    NoGrad ng;
    VarPtr f = penultimate(leaf(rasters_to_batch({img})));
    return std::vector<double>(f->val.v.begin(), f->val.v.end());
}

NamedParams WriterClassifier::named_params() const {
    NamedParams out;
    for (size_t i = 0; i < convs.size(); ++i) convs[i].collect("wc.conv" + std::to_string(i), out);
    fc1.collect("wc.fc1", out);
    fc2.collect("wc.fc2", out);
    return out;
}

void WriterClassifier::save(const std::string& path, const nlohmann::json& extra_meta) const {
    Checkpoint ck;
    ck.format = "writer_classifier";
    std::vector<int> widths;
    for (const auto& c : convs) widths.push_back(c.W->val.shape[0]);
    ck.meta["widths"] = widths;
    ck.meta["hidden"] = hidden;
    ck.meta["writers"] = writers;
    for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;
    ck.add_params(named_params());
    ck.save(path);
}

WriterClassifier WriterClassifier::load(const std::string& path) {
    const Checkpoint ck = Checkpoint::load(path, "writer_classifier");
    Rng dummy(0);
    WriterClassifier m(ck.meta.at("widths").get<std::vector<int>>(),
                       ck.meta.at("hidden").get<int>(),
                       int(ck.meta.at("writers").size()), dummy);
    m.writers = ck.meta.at("writers").get<std::vector<std::string>>();
    ck.load_params(m.named_params());
    return m;
}

WriterClassifier train_writer_classifier(const DatasetManifest& manifest,
                                         const ClassifierTrainConfig& config) {
    const auto train_idx = manifest.indices_of_split(Split::Train);
    if (train_idx.empty()) throw DataError("train_writer_classifier: empty train split");
    auto writers = manifest.writers_of_split(Split::Train);
    if (writers.size() < 2) throw DataError("train_writer_classifier: need >= 2 writers");

    Rng rng(config.seed);
    WriterClassifier model(config.widths, config.hidden, int(writers.size()), rng);
    model.writers = writers;

    Adam opt(param_list(model.named_params()), float(config.lr));
    auto writer_of = [&](size_t idx) {
        const auto it = std::lower_bound(writers.begin(), writers.end(),
                                         manifest.entries[idx].writer_id);
        return int(it - writers.begin());
    };

    const int steps = std::max(1, int(train_idx.size()) / config.batch);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (int step = 0; step < steps; ++step) {
            std::vector<Raster> imgs;
            std::vector<int> labels;
            for (int b = 0; b < config.batch; ++b) {
                const size_t idx = train_idx[rng.next_below(train_idx.size())];
                imgs.push_back(load_canonical(manifest, idx));
                labels.push_back(writer_of(idx));
            }
            VarPtr loss = cross_entropy(model.logits(leaf(rasters_to_batch(imgs))), labels);
            if (!std::isfinite(loss->scalar()))
                throw NumericError("writer classifier: non-finite loss");
            opt.zero_grad();
            backward(loss);
            opt.step();
        }
    }
    return model;
}

std::vector<double> ClassifierExtractor::extract(const Raster& img) const {
    return model->features(img);
}

double writer_fidelity(const DatasetManifest& gen_manifest, const WriterPredictor& classifier) {
    if (gen_manifest.entries.empty()) throw DataError("writer_fidelity: empty manifest");
    int correct = 0;
    for (const auto& entry : gen_manifest.entries) {
        const Raster img = canonicalize_image(
            load_image(gen_manifest.resolve_path(entry.image_path)));
        if (classifier(img, entry) == entry.writer_id) ++correct;
    }
    return double(correct) / double(gen_manifest.entries.size());
}

double writer_fidelity(const DatasetManifest& gen_manifest, const WriterClassifier& classifier) {
    for (const auto& e : gen_manifest.entries)
        if (!std::binary_search(classifier.writers.begin(), classifier.writers.end(), e.writer_id))
            throw DataError("writer '" + e.writer_id + "' unknown to the classifier");
    return writer_fidelity(gen_manifest, [&classifier](const Raster& img, const ManifestEntry&) {
        return classifier.classify(img);
    });
}

size_t edit_distance(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<size_t> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = j;
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= m; ++j) {
            const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

size_t word_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    // map words to ids, reuse the codepoint routine
    std::vector<std::string> vocab;
    auto id_of = [&vocab](const std::string& w) {
        auto it = std::find(vocab.begin(), vocab.end(), w);
        if (it == vocab.end()) {
            vocab.push_back(w);
            return uint32_t(vocab.size() - 1);
        }
        return uint32_t(it - vocab.begin());
    };
    std::vector<uint32_t> ia, ib;
    for (const auto& w : a) ia.push_back(id_of(w));
    for (const auto& w : b) ib.push_back(id_of(w));
    return edit_distance(ia, ib);
}

double cer(const std::string& reference, const std::string& hypothesis) {
    const auto ref = utf8_decode(reference);
    if (ref.empty()) throw DataError("cer: empty reference");
    return double(edit_distance(ref, utf8_decode(hypothesis))) / double(ref.size());
}

double wer(const std::vector<std::string>& reference_words,
           const std::vector<std::string>& hypothesis_words) {
    if (reference_words.empty()) throw DataError("wer: empty reference");
    return double(word_edit_distance(reference_words, hypothesis_words)) /
           double(reference_words.size());
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    auto put = [&j](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("fid", fid);
    put("mssim", mssim);
    put("rmse", rmse);
    put("perceptual", perceptual);
    put("writer_acc", writer_acc);
    put("cer_mean", cer_mean);
    put("cer_std", cer_std);
    put("wer_mean", wer_mean);
    put("wer_std", wer_std);
    j["n_real"] = n_real;
    j["n_gen"] = n_gen;
    j["config_echo"] = config_echo;
    j["config_hash"] = config_hash;
    return j;
}

}  // namespace hwgen
