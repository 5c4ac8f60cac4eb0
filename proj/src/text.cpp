// SPDX-License-Identifier: Apache-2.0
#include "debias/text.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "debias/error.hpp"

namespace debias::text {
namespace {

// Decodes UTF-8, silently dropping malformed or overlong sequences.
std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto lead = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        char32_t cp = 0;
        if (lead < 0x80) {
            len = 1;
            cp = lead;
        } else if ((lead & 0xE0) == 0xC0) {
            len = 2;
            cp = lead & 0x1F;
        } else if ((lead & 0xF0) == 0xE0) {
            len = 3;
            cp = lead & 0x0F;
        } else if ((lead & 0xF8) == 0xF0) {
            len = 4;
            cp = lead & 0x07;
        } else {
            ++i;
            continue;
        }
        if (i + len > s.size()) {
            ++i;
            continue;
        }
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const auto c = static_cast<unsigned char>(s[i + k]);
            if ((c & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (c & 0x3F);
        }
        static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
        if (!ok || cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_emoji(char32_t cp) {
    struct Range {
        char32_t lo, hi;
    };
    // Pictographic blocks plus the joiners and modifiers used to build
    // emoji sequences (ZWJ, variation selectors, keycap, tag characters).
    static constexpr Range kRanges[] = {
        {0x1F000, 0x1FAFF}, {0x2600, 0x27BF},   {0x2300, 0x23FF},  {0x2B00, 0x2BFF},
        {0x200D, 0x200D},   {0xFE00, 0xFE0F},   {0x20E3, 0x20E3},  {0xE0020, 0xE007F},
        {0x203C, 0x203C},   {0x2049, 0x2049},   {0x3030, 0x3030},  {0x303D, 0x303D},
        {0x3297, 0x3297},   {0x3299, 0x3299},
    };
    for (auto r : kRanges) {
        if (cp >= r.lo && cp <= r.hi) return true;
    }
    return false;
}

bool is_space(char32_t cp) {
    return cp == ' ' || (cp >= 0x09 && cp <= 0x0D) || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
           (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
           cp == 0x3000;
}

bool is_ascii_alnum(char32_t cp) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

bool is_handle_char(char32_t cp) { return is_ascii_alnum(cp) || cp == '_'; }

char32_t ascii_lower(char32_t cp) { return (cp >= 'A' && cp <= 'Z') ? cp + ('a' - 'A') : cp; }

bool matches_at(const std::vector<char32_t>& s, std::size_t pos, std::string_view pattern) {
    if (pos + pattern.size() > s.size()) return false;
    for (std::size_t k = 0; k < pattern.size(); ++k) {
        if (ascii_lower(s[pos + k]) != static_cast<char32_t>(pattern[k])) return false;
    }
    return true;
}

bool url_starts_at(const std::vector<char32_t>& s, std::size_t pos) {
    if (matches_at(s, pos, "http://") || matches_at(s, pos, "https://")) return true;
    const bool boundary = pos == 0 || !is_ascii_alnum(s[pos - 1]);
    return boundary && (matches_at(s, pos, "www.") || matches_at(s, pos, "t.co/"));
}

bool is_ascii_punct(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && ((u >= 0x21 && u <= 0x2F) || (u >= 0x3A && u <= 0x40) || (u >= 0x5B && u <= 0x60) ||
                        (u >= 0x7B && u <= 0x7E));
}

bool is_ascii_space(char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

}  // namespace

std::string preprocess(std::string_view raw) {
    std::vector<char32_t> cps = decode_utf8(raw);
    std::erase_if(cps, is_emoji);

    std::vector<char32_t> no_urls;
    no_urls.reserve(cps.size());
    for (std::size_t i = 0; i < cps.size();) {
        if (url_starts_at(cps, i)) {
            while (i < cps.size() && !is_space(cps[i])) ++i;
        } else {
            no_urls.push_back(cps[i++]);
        }
    }

    std::vector<char32_t> handled;
    handled.reserve(no_urls.size());
    for (std::size_t i = 0; i < no_urls.size();) {
        // A run of '@' before a handle is part of it, so the output has no
        // "@" + "user" pair for a second pass to rewrite.
        std::size_t at_end = i;
        while (at_end < no_urls.size() && no_urls[at_end] == '@') ++at_end;
        if (at_end > i && at_end < no_urls.size() && is_handle_char(no_urls[at_end])) {
            i = at_end;
            while (i < no_urls.size() && is_handle_char(no_urls[i])) ++i;
            for (char c : std::string_view("user")) handled.push_back(static_cast<char32_t>(c));
        } else {
            handled.push_back(no_urls[i++]);
        }
    }

    std::string out;
    out.reserve(handled.size());
    bool pending_space = false;
    for (char32_t cp : handled) {
        if (is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        append_utf8(out, cp);
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view cleaned) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && is_ascii_space(cleaned[i])) ++i;
        std::size_t j = i;
        while (j < cleaned.size() && !is_ascii_space(cleaned[j])) ++j;
        if (j == i) break;
        std::string word(cleaned.substr(i, j - i));
        i = j;
        for (char& c : word) {
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        }

        std::size_t begin = 0, end = word.size();
        while (begin < end && is_ascii_punct(word[begin])) {
            if (word[begin] == '#') {
                const bool word_follows = std::any_of(word.begin() + static_cast<std::ptrdiff_t>(begin) + 1,
                                                      word.begin() + static_cast<std::ptrdiff_t>(end),
                                                      [](char c) { return !is_ascii_punct(c); });
                if (word_follows) break;
            }
            tokens.emplace_back(1, word[begin++]);
        }
        std::vector<std::string> trailing;
        while (end > begin && is_ascii_punct(word[end - 1])) {
            trailing.emplace_back(1, word[--end]);
        }
        if (end > begin) tokens.push_back(word.substr(begin, end - begin));
        tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
    }
    return tokens;
}

Vocabulary::Vocabulary(std::size_t max_size, std::size_t min_frequency)
    : max_size_(max_size), min_frequency_(min_frequency) {
    if (max_size < kReserved) throw ValidationError("vocabulary max_size must be at least 2");
    if (min_frequency == 0) throw ValidationError("vocabulary min_frequency must be positive");
    tokens_ = {"<pad>", "<unk>"};
}

void Vocabulary::append(std::string token) {
    ids_.emplace(token, tokens_.size());
    tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> corpus, std::size_t max_size,
                             std::size_t min_frequency) {
    Vocabulary vocab(max_size, min_frequency);
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& doc : corpus) {
        for (const auto& tok : doc) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, n] : counts) {
        if (n >= min_frequency) ranked.emplace_back(tok, n);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (ranked.size() > max_size - kReserved) ranked.resize(max_size - kReserved);
    for (auto& [tok, n] : ranked) vocab.append(std::move(tok));
    return vocab;
}

std::size_t Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnknown : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

std::string Vocabulary::serialize() const {
    std::string out = "vocab-v1 " + std::to_string(max_size_) + " " + std::to_string(min_frequency_) + "\n";
    for (std::size_t i = 0; i < tokens_.size(); ++i) out += tokens_[i] + "\t" + std::to_string(i) + "\n";
    return out;
}

Vocabulary Vocabulary::parse(std::string_view contents) {
    std::istringstream in{std::string(contents)};
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("vocabulary file is empty");
    std::istringstream header(line);
    std::string tag;
    std::size_t max_size = 0, min_frequency = 0;
    if (!(header >> tag >> max_size >> min_frequency) || tag != "vocab-v1") {
        throw ValidationError("vocabulary line 1: expected 'vocab-v1 <max_size> <min_frequency>'");
    }
    Vocabulary vocab(max_size, min_frequency);
    std::size_t expected = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) {
            throw ValidationError("vocabulary line " + std::to_string(line_no) + ": missing tab");
        }
        const std::string tok = line.substr(0, tab);
        std::size_t id = 0;
        try {
            id = std::stoul(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw ValidationError("vocabulary line " + std::to_string(line_no) + ": bad id");
        }
        if (id != expected) {
            throw ValidationError("vocabulary line " + std::to_string(line_no) + ": expected id " +
                                  std::to_string(expected));
        }
        if (id >= kReserved) vocab.append(tok);
        ++expected;
    }
    if (expected < kReserved) throw ValidationError("vocabulary is missing reserved ids");
    return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read vocabulary " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

EncodedText encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len == 0) throw ValidationError("max_len must be at least 1");
    EncodedText enc{std::vector<std::size_t>(max_len, Vocabulary::kPad), std::vector<std::uint8_t>(max_len, 0)};
    const std::size_t n = std::min(max_len, tokens.size());
    for (std::size_t i = 0; i < n; ++i) {
        enc.ids[i] = vocab.id(tokens[i]);
        enc.mask[i] = 1;
    }
    return enc;
}

EncodedText encode_text(std::string_view raw, const Vocabulary& vocab, std::size_t max_len) {
    const auto tokens = tokenize(preprocess(raw));
    return encode(tokens, vocab, max_len);
}

}  // namespace debias::text
