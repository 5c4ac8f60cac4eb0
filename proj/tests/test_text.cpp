// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "debias/error.hpp"
#include "debias/rng.hpp"
#include "debias/text.hpp"

using namespace debias;
using namespace debias::text;

using Tokens = std::vector<std::string>;

TEST(Preprocess, HandleUrlEmojiHashtag) {
    EXPECT_EQ(preprocess("@john see https://t.co/abc \xF0\x9F\x98\x80 #fun"), "user see #fun");
}

TEST(Preprocess, HashtagsKept) { EXPECT_EQ(preprocess("#hello world"), "#hello world"); }

TEST(Preprocess, Empty) { EXPECT_EQ(preprocess(""), ""); }

TEST(Preprocess, BareShortLinksAndWww) {
    EXPECT_EQ(preprocess("look t.co/xyz and www.example.com/a now"), "look and now");
    EXPECT_EQ(preprocess("http://a.b/c?d=1"), "");
}

TEST(Preprocess, HandleBoundaries) {
    EXPECT_EQ(preprocess("hi @a_b1, @c!"), "hi user, user!");
    EXPECT_EQ(preprocess("email@ host"), "email@ host");
}

TEST(Preprocess, CollapsesWhitespaceAndTrims) {
    EXPECT_EQ(preprocess("  a \t\n b   c  "), "a b c");
}

TEST(Preprocess, ZwjSequenceAndFlagRemoved) {
    // family emoji (ZWJ sequence) and a regional-indicator flag
    EXPECT_EQ(preprocess("x \xF0\x9F\x91\xA8\xE2\x80\x8D\xF0\x9F\x91\xA9 y \xF0\x9F\x87\xBA\xF0\x9F\x87\xB8 z"), "x y z");
}

TEST(Preprocess, NonEmojiUnicodeKept) { EXPECT_EQ(preprocess("caf\xC3\xA9 na\xC3\xAFve"), "caf\xC3\xA9 na\xC3\xAFve"); }

TEST(Preprocess, PropertyIdempotentOnRandomInput) {
    const std::vector<std::string> pieces{"@user_1", " ",     "\t",   "https://x.y/z", "t.co/q", "www.a.b", "#tag",
                                          "word",    ",",     "!",    "\xF0\x9F\x98\x80", "\xE2\x9D\xA4\xEF\xB8\x8F",
                                          "\xC3\xA9", "\xFF", "\xE2\x80\x8D", "@",      "#",      "http://"};
    Rng rng(41);
    for (int trial = 0; trial < 2000; ++trial) {
        std::string s;
        const std::size_t n = rng.below(12);
        for (std::size_t i = 0; i < n; ++i) {
            s += pieces[rng.below(pieces.size())];
            if (rng.bernoulli(0.3)) s += static_cast<char>(rng.below(256));
        }
        const std::string once = preprocess(s);
        ASSERT_EQ(preprocess(once), once) << "input: " << s;
    }
}

TEST(Tokenize, Examples) {
    EXPECT_EQ(tokenize("user see #fun"), (Tokens{"user", "see", "#fun"}));
    EXPECT_EQ(tokenize("Hello, World!"), (Tokens{"hello", ",", "world", "!"}));
    EXPECT_EQ(tokenize("#Fun"), (Tokens{"#fun"}));
}

TEST(Tokenize, LeadingPunctuationAndHash) {
    EXPECT_EQ(tokenize("(#tag)"), (Tokens{"(", "#tag", ")"}));
    EXPECT_EQ(tokenize("\"quoted\""), (Tokens{"\"", "quoted", "\""}));
    EXPECT_EQ(tokenize("#"), (Tokens{"#"}));
    EXPECT_EQ(tokenize("wait..."), (Tokens{"wait", ".", ".", "."}));
}

TEST(Tokenize, InnerPunctuationStays) { EXPECT_EQ(tokenize("don't stop"), (Tokens{"don't", "stop"})); }

TEST(Vocabulary, MinFrequencyThreshold) {
    const std::vector<Tokens> corpus{{"a", "a", "a", "b"}};
    const auto v = Vocabulary::build(corpus, 100, 2);
    EXPECT_EQ(v.size(), 3u);
    EXPECT_EQ(v.id("a"), 2u);
    EXPECT_EQ(v.id("b"), Vocabulary::kUnknown);
}

TEST(Vocabulary, LexicographicTieBreak) {
    const std::vector<Tokens> corpus{{"y", "x"}, {"y", "x"}};
    const auto v = Vocabulary::build(corpus, 100, 2);
    EXPECT_EQ(v.id("x"), 2u);
    EXPECT_EQ(v.id("y"), 3u);
}

TEST(Vocabulary, MaxSizeCountsReservedIds) {
    const std::vector<Tokens> corpus{{"a", "b", "c", "d", "e"}, {"a", "b", "c", "d", "e"}};
    const auto v = Vocabulary::build(corpus, 3, 2);
    EXPECT_EQ(v.size(), 3u);
    EXPECT_EQ(v.token(2), "a");
}

TEST(Vocabulary, FrequencyOrder) {
    const std::vector<Tokens> corpus{{"b", "b", "c", "a", "c", "c", "a", "b", "c"}};
    const auto v = Vocabulary::build(corpus, 100, 1);
    EXPECT_EQ(v.token(2), "c");
    EXPECT_EQ(v.token(3), "b");
    EXPECT_EQ(v.token(4), "a");
    EXPECT_EQ(v.token(0), "<pad>");
    EXPECT_EQ(v.token(1), "<unk>");
}

TEST(Vocabulary, InvalidParametersRejected) {
    EXPECT_THROW(Vocabulary(1, 2), ValidationError);
    EXPECT_THROW(Vocabulary(10, 0), ValidationError);
}

TEST(Vocabulary, PropertyOrderIndependent) {
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Tokens> corpus(1 + rng.below(10));
        for (auto& doc : corpus) {
            const std::size_t n = rng.below(8);
            for (std::size_t i = 0; i < n; ++i) doc.push_back("t" + std::to_string(rng.below(12)));
        }
        const auto a = Vocabulary::build(corpus, 8, 1 + rng.below(2));
        std::vector<Tokens> shuffled = corpus;
        rng.shuffle(std::span(shuffled));
        for (auto& doc : shuffled) rng.shuffle(std::span(doc));
        const auto b = Vocabulary::build(shuffled, a.max_size(), a.min_frequency());
        EXPECT_EQ(a, b);
    }
}

TEST(Vocabulary, SerializeRoundTrip) {
    const std::vector<Tokens> corpus{{"b", "a", "b", "#x"}, {"a", "#x", "b"}};
    const auto v = Vocabulary::build(corpus, 50, 2);
    const std::string text = v.serialize();
    EXPECT_EQ(text.substr(0, text.find('\n')), "vocab-v1 50 2");
    EXPECT_NE(text.find("<pad>\t0\n<unk>\t1\nb\t2\n"), std::string::npos);
    EXPECT_EQ(Vocabulary::parse(text), v);

    const auto path = std::filesystem::temp_directory_path() / "debias_vocab_roundtrip.txt";
    v.save(path);
    EXPECT_EQ(Vocabulary::load(path), v);
    std::filesystem::remove(path);
}

TEST(Vocabulary, ParseRejectsMalformed) {
    EXPECT_THROW(Vocabulary::parse("vocab-v2 5 2\n"), ValidationError);
    EXPECT_THROW(Vocabulary::parse("vocab-v1 5 2\n<pad>\t0\n<unk>\t2\n"), ValidationError);
    EXPECT_THROW(Vocabulary::parse("vocab-v1 5 2\n<pad>\t0\n<unk>\t1\nfoo\n"), ValidationError);
}

TEST(Encode, EmptyIsAllPadding) {
    const Vocabulary v(10, 1);
    const auto e = encode(Tokens{}, v, 4);
    EXPECT_EQ(e.ids, (std::vector<std::size_t>{0, 0, 0, 0}));
    EXPECT_EQ(e.mask, (std::vector<std::uint8_t>{0, 0, 0, 0}));
}

TEST(Encode, PadsTruncatesAndMapsUnknown) {
    const std::vector<Tokens> corpus{{"a", "b"}};
    const auto v = Vocabulary::build(corpus, 10, 1);
    const auto short_e = encode(Tokens{"a", "zzz"}, v, 4);
    EXPECT_EQ(short_e.ids, (std::vector<std::size_t>{v.id("a"), 1, 0, 0}));
    EXPECT_EQ(short_e.mask, (std::vector<std::uint8_t>{1, 1, 0, 0}));
    const auto long_e = encode(Tokens{"b", "a", "a", "b", "a"}, v, 3);
    EXPECT_EQ(long_e.ids, (std::vector<std::size_t>{v.id("b"), v.id("a"), v.id("a")}));
    EXPECT_EQ(long_e.mask, (std::vector<std::uint8_t>{1, 1, 1}));
}

TEST(Encode, PropertyTotalOnArbitraryBytes) {
    const std::vector<Tokens> corpus{{"user", "see", "#fun"}};
    const auto v = Vocabulary::build(corpus, 10, 1);
    Rng rng(47);
    for (int trial = 0; trial < 500; ++trial) {
        std::string s;
        const std::size_t n = rng.below(40);
        for (std::size_t i = 0; i < n; ++i) s += static_cast<char>(rng.below(256));
        const auto e = encode_text(s, v, 8);
        ASSERT_EQ(e.ids.size(), 8u);
        ASSERT_EQ(e.mask.size(), 8u);
        for (std::size_t i = 0; i < 8; ++i) ASSERT_EQ(e.mask[i] == 0, e.ids[i] == 0);
        EXPECT_EQ(encode_text(s, v, 8).ids, e.ids);
    }
}
