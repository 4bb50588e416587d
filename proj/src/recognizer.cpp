#include "hwgen/recognizer.hpp"

#include <algorithm>
#include <cmath>

#include "hwgen/metrics.hpp"
#include "hwgen/style_encoder.hpp"

namespace hwgen {

namespace {

constexpr double kLogZero = -1e30;

double logsumexp2(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b <= kLogZero) return a;
    return a + std::log1p(std::exp(b - a));
}
double logsumexp3(double a, double b, double c) { return logsumexp2(logsumexp2(a, b), c); }

// mean over the height axis: (N,C,H,W) -> (N,C,1,W)
VarPtr mean_h(const VarPtr& x) {
    const auto& s = x->val.shape;
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    Tensor out({N, C, 1, W});
    for (int nc = 0; nc < N * C; ++nc) {
        const float* src = x->val.v.data() + int64_t(nc) * H * W;
        float* dst = out.v.data() + int64_t(nc) * W;
        for (int j = 0; j < W; ++j) {
            float acc = 0.f;
            for (int i = 0; i < H; ++i) acc += src[int64_t(i) * W + j];
            dst[j] = acc / float(H);
        }
    }
    return make_op(std::move(out), {x}, [x, N, C, H, W](Var& self) {
        Tensor& gx = x->g();
        for (int nc = 0; nc < N * C; ++nc) {
            const float* g = self.grad.v.data() + int64_t(nc) * W;
            float* dst = gx.v.data() + int64_t(nc) * H * W;
            for (int j = 0; j < W; ++j) {
                const float gv = g[j] / float(H);
                for (int i = 0; i < H; ++i) dst[int64_t(i) * W + j] += gv;
            }
        }
    });
}

}  // namespace

VarPtr ctc_loss(const VarPtr& logits, const std::vector<std::vector<int>>& targets, int* skipped) {
    const auto& shp = logits->val.shape;
    if (shp.size() != 3) throw NumericError("ctc_loss: logits must be (N,T,C)");
    const int N = shp[0], T = shp[1], C = shp[2];
    if (int(targets.size()) != N) throw NumericError("ctc_loss: target count mismatch");

    Tensor grad_buf(shp);  // d(total)/d(logit), filled sample by sample
    double total = 0.0;
    int used = 0;
    if (skipped) *skipped = 0;

    std::vector<double> logp(size_t(T) * C);
    for (int n = 0; n < N; ++n) {
        const auto& tgt = targets[size_t(n)];
        for (int v : tgt)
            if (v < 1 || v >= C) throw DataError("ctc_loss: target class out of range");
        const int L = int(tgt.size());
        int repeats = 0;
        for (int i = 0; i + 1 < L; ++i)
            if (tgt[size_t(i)] == tgt[size_t(i + 1)]) ++repeats;
        if (L == 0 || L + repeats > T) {  // cannot align within the frame budget
            if (skipped) ++*skipped;
            continue;
        }

        // per-frame log-softmax
        const float* src = logits->val.v.data() + int64_t(n) * T * C;
        for (int t = 0; t < T; ++t) {
            double mx = src[int64_t(t) * C];
            for (int c = 1; c < C; ++c) mx = std::max(mx, double(src[int64_t(t) * C + c]));
            double denom = 0.0;
            for (int c = 0; c < C; ++c) denom += std::exp(double(src[int64_t(t) * C + c]) - mx);
            const double logz = std::log(denom) + mx;
            for (int c = 0; c < C; ++c) logp[size_t(t) * C + c] = double(src[int64_t(t) * C + c]) - logz;
        }

        const int S = 2 * L + 1;
        auto lab = [&](int s) { return s % 2 == 0 ? 0 : tgt[size_t(s / 2)]; };
        std::vector<double> alpha(size_t(T) * S, kLogZero), beta(size_t(T) * S, kLogZero);

        alpha[0] = logp[0 * size_t(C) + 0];
        if (S > 1) alpha[1] = logp[size_t(lab(1))];
        for (int t = 1; t < T; ++t)
            for (int s = 0; s < S; ++s) {
                double a = alpha[size_t(t - 1) * S + s];
                if (s >= 1) a = logsumexp2(a, alpha[size_t(t - 1) * S + s - 1]);
                if (s >= 2 && lab(s) != 0 && lab(s) != lab(s - 2))
                    a = logsumexp2(a, alpha[size_t(t - 1) * S + s - 2]);
                alpha[size_t(t) * S + s] = a + logp[size_t(t) * C + lab(s)];
            }

        beta[size_t(T - 1) * S + (S - 1)] = logp[size_t(T - 1) * C + lab(S - 1)];
        if (S > 1) beta[size_t(T - 1) * S + (S - 2)] = logp[size_t(T - 1) * C + lab(S - 2)];
        for (int t = T - 2; t >= 0; --t)
            for (int s = 0; s < S; ++s) {
                double b = beta[size_t(t + 1) * S + s];
                if (s + 1 < S) b = logsumexp2(b, beta[size_t(t + 1) * S + s + 1]);
                if (s + 2 < S && lab(s + 2) != 0 && lab(s + 2) != lab(s))
                    b = logsumexp2(b, beta[size_t(t + 1) * S + s + 2]);
                beta[size_t(t) * S + s] = b + logp[size_t(t) * C + lab(s)];
            }

        const double log_prob = S > 1 ? logsumexp2(alpha[size_t(T - 1) * S + S - 1],
                                                   alpha[size_t(T - 1) * S + S - 2])
                                      : alpha[size_t(T - 1) * S + S - 1];
        if (!std::isfinite(log_prob)) {
            if (skipped) ++*skipped;
            continue;
        }
        total += -log_prob;
        ++used;

        // gradient: softmax - path posterior
        float* gb = grad_buf.v.data() + int64_t(n) * T * C;
        for (int t = 0; t < T; ++t) {
            std::vector<double> gamma(size_t(C), kLogZero);
            for (int s = 0; s < S; ++s) {
                const double through =
                    alpha[size_t(t) * S + s] + beta[size_t(t) * S + s] - logp[size_t(t) * C + lab(s)];
                gamma[size_t(lab(s))] = logsumexp2(gamma[size_t(lab(s))], through);
            }
            for (int c = 0; c < C; ++c) {
                const double post = std::exp(gamma[size_t(c)] - log_prob);
                gb[int64_t(t) * C + c] = float(std::exp(logp[size_t(t) * C + c]) - post);
            }
        }
    }

    if (used == 0) throw DataError("ctc_loss: no alignable sample in batch");
    const float inv = 1.f / float(used);
    for (auto& v : grad_buf.v) v *= inv;
    return make_op(Tensor::scalar(float(total / used)), {logits}, [logits, grad_buf](Var& self) {
        Tensor& g = logits->g();
        const float s = self.grad.v[0];
        for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += s * grad_buf.v[i];
    });
}

Recognizer::Recognizer(const Charset& charset_, int hidden_, Rng& rng)
    : charset(charset_), hidden(hidden_) {
    // height collapses 64 -> 4, width 256 -> 64 frames
    const int widths[4] = {16, 32, 48, 64};
    int cin = 1;
    for (int i = 0; i < 4; ++i) {
        const int sh = 2, sw = i < 2 ? 2 : 1;
        convs.emplace_back(cin, widths[i], 3, 3, sh, sw, 1, 1, rng);
        norms.emplace_back(widths[i], 8);
        cin = widths[i];
    }
    rnn1 = BiGRU(cin, hidden, rng);
    rnn2 = BiGRU(2 * hidden, hidden, rng);
    out = Linear(2 * hidden, int(charset.size()) + 1, rng);
}

VarPtr Recognizer::logits(const VarPtr& images) const {
    VarPtr x = images;
    for (size_t i = 0; i < convs.size(); ++i) x = silu(norms[i].fwd(convs[i].fwd(x)));
    VarPtr frames = nchw_to_nlc(mean_h(x));  // (N, 64, C)
    return out.fwd(rnn2.fwd(rnn1.fwd(frames)));
}

std::string Recognizer::greedy_decode(const Tensor& frame_logits) const {
    const int T = frame_logits.shape[0], C = frame_logits.shape[1];
    std::vector<uint32_t> cps;
    int prev = 0;
    for (int t = 0; t < T; ++t) {
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (frame_logits.at2(t, c) > frame_logits.at2(t, best)) best = c;
        if (best != 0 && best != prev) cps.push_back(charset.codepoints[size_t(best - 1)]);
        prev = best;
    }
    return utf8_encode(cps);
}

std::string Recognizer::transcribe(const Raster& img) const {
    NoGrad ng;
    VarPtr l = logits(leaf(rasters_to_batch({img})));
    const int T = l->val.shape[1], C = l->val.shape[2];
    return greedy_decode(l->val.reshaped({T, C}));
}

std::vector<int> Recognizer::target_of(const std::string& text) const {
    std::vector<int> out;
    for (uint32_t cp : utf8_decode(text)) {
        const int idx = charset.index_of(cp);
        if (idx < 0) throw DataError("recognizer: character outside charset in '" + text + "'");
        out.push_back(idx + 1);
    }
    return out;
}

NamedParams Recognizer::named_params() const {
    NamedParams np;
    for (size_t i = 0; i < convs.size(); ++i) {
        convs[i].collect("htr.conv" + std::to_string(i), np);
        norms[i].collect("htr.norm" + std::to_string(i), np);
    }
    rnn1.collect("htr.rnn1", np);
    rnn2.collect("htr.rnn2", np);
    out.collect("htr.out", np);
    return np;
}

void Recognizer::save(const std::string& path, const nlohmann::json& extra_meta) const {
    Checkpoint ck;
    ck.format = "recognizer";
    ck.meta["hidden"] = hidden;
    ck.meta["charset"] = charset.codepoints;
    for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;
    ck.add_params(named_params());
    ck.save(path);
}

Recognizer Recognizer::load(const std::string& path) {
    const Checkpoint ck = Checkpoint::load(path, "recognizer");
    Rng dummy(0);
    Charset cs;
    cs.codepoints = ck.meta.at("charset").get<std::vector<uint32_t>>();
    Recognizer m(cs, ck.meta.at("hidden").get<int>(), dummy);
    ck.load_params(m.named_params());
    return m;
}

RecognizerTrainResult ctc_train(const DatasetManifest& manifest,
                                const RecognizerTrainConfig& config) {
    const auto train_idx = manifest.indices_of_split(Split::Train);
    if (train_idx.empty()) throw DataError("ctc_train: empty train split");

    Rng rng(config.seed);
    RecognizerTrainResult res;
    res.model = Recognizer(manifest.charset, config.hidden, rng);
    Adam opt(param_list(res.model.named_params()), float(config.lr));

    const int steps = std::max(1, int(train_idx.size()) / config.batch);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double sum = 0.0;
        for (int step = 0; step < steps; ++step) {
            std::vector<Raster> imgs;
            std::vector<std::vector<int>> targets;
            for (int b = 0; b < config.batch; ++b) {
                const size_t idx = train_idx[rng.next_below(train_idx.size())];
                imgs.push_back(load_canonical(manifest, idx));
                targets.push_back(res.model.target_of(manifest.entries[idx].transcription));
            }
            int skipped = 0;
            VarPtr loss = ctc_loss(res.model.logits(leaf(rasters_to_batch(imgs))), targets, &skipped);
            res.skipped_samples += skipped;
            const double lv = loss->scalar();
            if (!std::isfinite(lv)) throw NumericError("ctc_train: non-finite loss");
            opt.zero_grad();
            backward(loss);
            opt.step();
            sum += lv;
        }
        res.epoch_loss.push_back(sum / steps);
    }
    return res;
}

HtrScores evaluate_recognizer(const Recognizer& model, const DatasetManifest& manifest,
                              Split split) {
    HtrScores s;
    size_t dist = 0, len = 0;
    int word_err = 0;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        if (manifest.entries[i].split != split) continue;
        const auto& ref = manifest.entries[i].transcription;
        const std::string hyp = model.transcribe(load_canonical(manifest, i));
        dist += edit_distance(utf8_decode(ref), utf8_decode(hyp));
        len += utf8_decode(ref).size();
        word_err += hyp == ref ? 0 : 1;
        ++s.n;
    }
    if (s.n == 0) throw DataError("evaluate_recognizer: split has no entries");
    s.cer = double(dist) / double(len);
    s.wer = double(word_err) / double(s.n);
    return s;
}

}  // namespace hwgen
