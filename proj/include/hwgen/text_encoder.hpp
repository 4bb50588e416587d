#pragma once

#include <string>
#include <vector>

#include "hwgen/dataset.hpp"
#include "hwgen/nn.hpp"

namespace hwgen {

inline constexpr int kLMax = kMaxWordLength;  // padded text length
inline constexpr int kPadId = 0;

// token i = codepoint of character i; pad id 0; mask marks the real prefix
struct TokenizedText {
    std::vector<int> token_ids;   // length L_max
    std::vector<float> mask;      // 1.0 on the character prefix, 0.0 on padding
    int length = 0;
};

TokenizedText tokenize(const std::string& text, int l_max = kLMax);
std::string detokenize(const TokenizedText& tokens);

struct TextCondition {
    Tensor values;             // (L_max, d_model)
    std::vector<float> mask;   // length L_max
};

// Character encoder: no vocabulary. Each codepoint is embedded as the sum of
// four hashed bucket lookups, a learned positional embedding is added, and a
// 2-layer bidirectional GRU mixes the sequence. Trained jointly with the
// denoiser; an adapter hook accepts an external pretrained character encoder.
struct CharTextEncoder {
    static constexpr int kHashTables = 4;
    static constexpr int kBuckets = 64;

    int d_text = 0;
    VarPtr tables[kHashTables];  // each (kBuckets, d_text)
    VarPtr pos;                  // (L_max * d_text) flat positional table
    BiGRU rnn1, rnn2;

    CharTextEncoder() = default;
    CharTextEncoder(int d_text, Rng& rng);

    // batch of token sequences -> (N, L_max, d_text)
    VarPtr fwd(const std::vector<TokenizedText>& batch) const;
    NamedParams named_params() const;

    static int bucket(int token_id, int table);
};

// Adapter for plugging a pretrained character-level encoder in place of the
// built-in one: anything mapping token ids to (L_max, d_text) rows.
struct TextEncoderAdapter {
    int d_text = 0;
    std::function<Tensor(const TokenizedText&)> encode;
};

// per-position projection to the model width; padding positions keep their mask
TextCondition encode_text(const TokenizedText& tokens, const CharTextEncoder& encoder,
                          const Linear& projector);
TextCondition encode_text(const TokenizedText& tokens, const TextEncoderAdapter& encoder,
                          const Linear& projector);

}  // namespace hwgen
