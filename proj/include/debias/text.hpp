// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace debias::text {

/// Drops URLs and emoji, replaces @handles with "user", keeps hashtags,
/// collapses whitespace and trims. Idempotent; malformed UTF-8 bytes are dropped.
std::string preprocess(std::string_view raw);

/// Lowercases, splits on whitespace, and peels leading/trailing punctuation
/// into one-character tokens. A '#' that starts a word stays attached.
std::vector<std::string> tokenize(std::string_view cleaned);

class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnknown = 1;
    static constexpr std::size_t kReserved = 2;

    Vocabulary(std::size_t max_size, std::size_t min_frequency);

    /// Tokens with frequency >= min_frequency, ranked by count (desc) then
    /// token (asc), keeping at most max_size - 2 of them.
    static Vocabulary build(std::span<const std::vector<std::string>> corpus, std::size_t max_size = 20000,
                            std::size_t min_frequency = 2);

    std::size_t id(std::string_view token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    bool contains(std::string_view token) const;
    /// Number of ids including the two reserved ones.
    std::size_t size() const { return tokens_.size(); }
    std::size_t max_size() const { return max_size_; }
    std::size_t min_frequency() const { return min_frequency_; }

    /// "vocab-v1 <max_size> <min_frequency>" then "token\tid" lines by id.
    std::string serialize() const;
    static Vocabulary parse(std::string_view contents);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.tokens_ == b.tokens_ && a.max_size_ == b.max_size_ && a.min_frequency_ == b.min_frequency_;
    }

private:
    void append(std::string token);

    std::size_t max_size_;
    std::size_t min_frequency_;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> ids_;
};

struct EncodedText {
    std::vector<std::size_t> ids;
    std::vector<std::uint8_t> mask;
};

EncodedText encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t max_len = 64);

/// preprocess -> tokenize -> encode.
EncodedText encode_text(std::string_view raw, const Vocabulary& vocab, std::size_t max_len = 64);

}  // namespace debias::text
