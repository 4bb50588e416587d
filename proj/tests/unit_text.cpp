#include <doctest.h>

#include "hwgen/text_encoder.hpp"
#include "test_util.hpp"

using namespace hwgen;

TEST_CASE("tokenize: codepoint ids, pad zero, prefix mask") {
    TokenizedText t = tokenize("the", 8);
    CHECK(t.token_ids == std::vector<int>{116, 104, 101, 0, 0, 0, 0, 0});
    CHECK(t.mask == std::vector<float>{1, 1, 1, 0, 0, 0, 0, 0});
    CHECK(t.length == 3);
}

TEST_CASE("tokenize: single character and bounds") {
    TokenizedText t = tokenize("a", kLMax);
    CHECK(t.token_ids[0] == 'a');
    CHECK(t.length == 1);
    CHECK_THROWS_AS(tokenize("", 8), DataError);
    CHECK_THROWS_AS(tokenize("abcdefghi", 8), DataError);
}

TEST_CASE("tokenize: injective on same-length strings; detokenize round trip") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::string a, b;
        const int len = 1 + int(rng.next_below(10));
        for (int i = 0; i < len; ++i) {
            a += char('a' + rng.next_below(26));
            b += char('a' + rng.next_below(26));
        }
        TokenizedText ta = tokenize(a), tb = tokenize(b);
        CHECK((a == b) == (ta.token_ids == tb.token_ids));
        CHECK(detokenize(ta) == a);
    }
    // multibyte characters survive the round trip
    CHECK(detokenize(tokenize("caf\xc3\xa9")) == "caf\xc3\xa9");
}

TEST_CASE("encode_text: fixed output shape, deterministic, mask passthrough") {
    Rng rng(7);
    CharTextEncoder enc(16, rng);
    Linear proj(16, 12, rng);
    TextCondition c1 = encode_text(tokenize("pen"), enc, proj);
    TextCondition c2 = encode_text(tokenize("pen"), enc, proj);
    CHECK(c1.values.shape == std::vector<int>{kLMax, 12});
    CHECK(c1.values.v == c2.values.v);
    CHECK(c1.mask == tokenize("pen").mask);

    TextCondition c3 = encode_text(tokenize("abcdefghijklmnopqrstuvwxyzabcdef"), enc, proj);
    CHECK(c3.values.shape == std::vector<int>{kLMax, 12});
}

TEST_CASE("encode_text: zero projector gives all-zero condition values") {
    Rng rng(8);
    CharTextEncoder enc(16, rng);
    Linear proj(16, 10, rng);
    std::fill(proj.W->val.v.begin(), proj.W->val.v.end(), 0.f);
    std::fill(proj.b->val.v.begin(), proj.b->val.v.end(), 0.f);
    TextCondition c = encode_text(tokenize("word"), enc, proj);
    for (float v : c.values.v) CHECK(v == 0.f);
}

TEST_CASE("encode_text: words differing in one character differ at that position") {
    Rng rng(9);
    CharTextEncoder enc(24, rng);
    Linear proj(24, 16, rng);
    TextCondition a = encode_text(tokenize("line"), enc, proj);
    TextCondition b = encode_text(tokenize("lane"), enc, proj);
    double diff_at_1 = 0;
    for (int d = 0; d < 16; ++d) diff_at_1 += std::abs(a.values.at2(1, d) - b.values.at2(1, d));
    CHECK(diff_at_1 > 1e-4);
}

TEST_CASE("encode_text: projector width mismatch rejected") {
    Rng rng(10);
    CharTextEncoder enc(16, rng);
    Linear proj(20, 12, rng);
    CHECK_THROWS_AS(encode_text(tokenize("x"), enc, proj), NumericError);
}

TEST_CASE("text encoder adapter: plugs an external embedding table") {
    Rng rng(11);
    TextEncoderAdapter adapter;
    adapter.d_text = 4;
    adapter.encode = [](const TokenizedText& t) {
        Tensor out({kLMax, 4});
        for (int l = 0; l < kLMax; ++l)
            for (int d = 0; d < 4; ++d) out.at2(l, d) = float(t.token_ids[size_t(l)] % (d + 2));
        return out;
    };
    Linear proj(4, 6, rng);
    TextCondition c = encode_text(tokenize("ab"), adapter, proj);
    CHECK(c.values.shape == std::vector<int>{kLMax, 6});
}

TEST_CASE("char hash buckets stay in range and spread") {
    std::set<int> seen;
    for (int cp = 'a'; cp <= 'z'; ++cp) {
        for (int h = 0; h < CharTextEncoder::kHashTables; ++h) {
            const int b = CharTextEncoder::bucket(cp, h);
            CHECK(b >= 0);
            CHECK(b < CharTextEncoder::kBuckets);
            seen.insert(b * CharTextEncoder::kHashTables + h);
        }
    }
    CHECK(seen.size() > 26);  // not all collapsed into one bucket
}
