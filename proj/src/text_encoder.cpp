#include "hwgen/text_encoder.hpp"

namespace hwgen {

TokenizedText tokenize(const std::string& text, int l_max) {
    if (text.empty()) throw DataError("tokenize: empty string");
    const auto cps = utf8_decode(text);
    if (int(cps.size()) > l_max)
        throw DataError("tokenize: '" + text + "' longer than " + std::to_string(l_max) +
                        " characters; segment it first");
    TokenizedText t;
    t.token_ids.assign(size_t(l_max), kPadId);
    t.mask.assign(size_t(l_max), 0.f);
    t.length = int(cps.size());
    for (size_t i = 0; i < cps.size(); ++i) {
        t.token_ids[i] = int(cps[i]);
        t.mask[i] = 1.f;
    }
    return t;
}

std::string detokenize(const TokenizedText& tokens) {
    std::vector<uint32_t> cps;
    for (int id : tokens.token_ids) {
        if (id == kPadId) break;
        cps.push_back(uint32_t(id));
    }
    return utf8_encode(cps);
}

int CharTextEncoder::bucket(int token_id, int table) {
    uint64_t x = uint64_t(uint32_t(token_id)) + 0x9E3779B97F4A7C15ull * uint64_t(table + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    x ^= x >> 31;
    return int(x % uint64_t(kBuckets));
}

CharTextEncoder::CharTextEncoder(int d_text_, Rng& rng) : d_text(d_text_) {
    for (int h = 0; h < kHashTables; ++h)
        tables[h] = leaf(Tensor::randn({kBuckets, d_text}, rng, 0.5f / float(kHashTables)), true);
    pos = leaf(Tensor::randn({kLMax * d_text}, rng, 0.1f), true);
    const int half = d_text / 2;
    rnn1 = BiGRU(d_text, half, rng);
    rnn2 = BiGRU(2 * half, half, rng);
}

VarPtr CharTextEncoder::fwd(const std::vector<TokenizedText>& batch) const {
    const int N = int(batch.size());
    std::vector<int> ids;
    ids.reserve(size_t(N) * kLMax);
    for (const auto& t : batch) {
        if (int(t.token_ids.size()) != kLMax) throw DataError("tokenized text has wrong length");
        ids.insert(ids.end(), t.token_ids.begin(), t.token_ids.end());
    }
    VarPtr emb;
    for (int h = 0; h < kHashTables; ++h) {
        std::vector<int> bucketed(ids.size());
        for (size_t i = 0; i < ids.size(); ++i) bucketed[i] = bucket(ids[i], h);
        VarPtr part = gather_rows(tables[h], bucketed);  // (N*L, d)
        emb = emb ? add(emb, part) : part;
    }
    emb = reshape(emb, {N, kLMax * d_text});
    emb = add_bias(emb, pos);
    emb = reshape(emb, {N, kLMax, d_text});
    VarPtr h1 = rnn1.fwd(emb);
    VarPtr h2 = rnn2.fwd(h1);
    return h2;  // (N, L, 2*(d/2))
}

NamedParams CharTextEncoder::named_params() const {
    NamedParams out;
    for (int h = 0; h < kHashTables; ++h)
        out.push_back({"text.table" + std::to_string(h), tables[h]});
    out.push_back({"text.pos", pos});
    rnn1.collect("text.rnn1", out);
    rnn2.collect("text.rnn2", out);
    return out;
}

TextCondition encode_text(const TokenizedText& tokens, const CharTextEncoder& encoder,
                          const Linear& projector) {
    if (projector.W->val.shape[0] != encoder.d_text)
        throw NumericError("encode_text: projector input width != encoder width");
    NoGrad ng;
    VarPtr emb = encoder.fwd({tokens});                       // (1, L, d_text)
    VarPtr proj = projector.fwd(emb);                         // (1, L, d_model)
    TextCondition out;
    out.values = proj->val.reshaped({kLMax, projector.W->val.shape[1]});
    out.mask = tokens.mask;
    if (!out.values.all_finite()) throw NumericError("encode_text: non-finite condition");
    return out;
}

TextCondition encode_text(const TokenizedText& tokens, const TextEncoderAdapter& encoder,
                          const Linear& projector) {
    if (projector.W->val.shape[0] != encoder.d_text)
        throw NumericError("encode_text: projector input width != encoder width");
    Tensor emb = encoder.encode(tokens);
    if (emb.shape != std::vector<int>{kLMax, encoder.d_text})
        throw NumericError("text encoder adapter returned bad shape " + emb.shape_str());
    NoGrad ng;
    VarPtr proj = projector.fwd(constant(std::move(emb)));
    TextCondition out;
    out.values = proj->val;
    out.mask = tokens.mask;
    return out;
}

}  // namespace hwgen
