// SPDX-License-Identifier: Apache-2.0
#include "debias/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "debias/csv.hpp"
#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias::corpus {

Dialect majority_dialect(double p_aae, double p_wae) { return p_aae > p_wae ? Dialect::aae : Dialect::wae; }

void Dataset::validate() const {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const Record& r = records[i];
        if (!seen.insert(r.id).second) throw ValidationError("duplicate record id '" + r.id + "'");
        if (!in_scheme(r.label, scheme)) {
            throw ValidationError("record '" + r.id + "' has label " + std::string(to_string(r.label)) +
                                  " outside the " + std::string(to_string(scheme)) + " scheme");
        }
        if (!(r.p_aae >= 0.0 && r.p_aae <= 1.0 && r.p_wae >= 0.0 && r.p_wae <= 1.0)) {
            throw ValidationError("record '" + r.id + "' has a posterior outside [0,1]");
        }
    }
}

CellCounts::CellCounts(Scheme scheme) : scheme_(scheme), cells_(class_count(scheme), {0, 0}) {}

std::size_t& CellCounts::at(Label label, Dialect dialect) {
    return cells_[class_index(label, scheme_)][dialect_index(dialect)];
}

std::size_t CellCounts::at(Label label, Dialect dialect) const {
    return cells_[class_index(label, scheme_)][dialect_index(dialect)];
}

std::size_t CellCounts::total(Dialect dialect) const {
    std::size_t n = 0;
    for (const auto& row : cells_) n += row[dialect_index(dialect)];
    return n;
}

std::size_t CellCounts::total() const { return total(Dialect::aae) + total(Dialect::wae); }

CellCounts count_cells(const Dataset& d) {
    CellCounts counts(d.scheme);
    for (const auto& r : d.records) ++counts.at(r.label, r.dialect);
    return counts;
}

std::string counts_json(const Dataset& d) {
    const CellCounts counts = count_cells(d);
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (Label l : labels_for(d.scheme)) {
        for (Dialect z : kDialects) {
            j["counts." + std::string(to_string(l)) + "." + std::string(to_string(z))] = counts.at(l, z);
        }
    }
    return j.dump(2) + "\n";
}

Format format_for(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    return (ext == ".jsonl" || ext == ".json") ? Format::jsonl : Format::csv;
}

namespace {

std::string row_prefix(std::size_t row, std::size_t line) {
    return "row " + std::to_string(row) + " (line " + std::to_string(line) + "): ";
}

// Fields of one input row, already looked up by column name.
struct RawRow {
    std::optional<std::string> id, text, label, p_aae, p_wae, dialect;
};

Record make_record(const RawRow& raw, const std::string& where) {
    Record r;
    if (!raw.id || raw.id->empty()) throw ValidationError(where + "missing id");
    if (!raw.text) throw ValidationError(where + "missing text");
    if (!raw.label) throw ValidationError(where + "missing label");
    r.id = *raw.id;
    r.text = *raw.text;
    const auto label = parse_label(*raw.label);
    if (!label) throw ValidationError(where + "unknown label '" + *raw.label + "'");
    r.label = *label;

    const bool has_posteriors = raw.p_aae && raw.p_wae && !raw.p_aae->empty() && !raw.p_wae->empty();
    std::optional<Dialect> given;
    if (raw.dialect && !raw.dialect->empty()) {
        given = parse_dialect(*raw.dialect);
        if (!given) throw ValidationError(where + "unknown dialect '" + *raw.dialect + "'");
    }
    if (has_posteriors) {
        if (!parse_double(*raw.p_aae, r.p_aae) || !parse_double(*raw.p_wae, r.p_wae)) {
            throw ValidationError(where + "posterior is not a number");
        }
        if (!(r.p_aae >= 0.0 && r.p_aae <= 1.0) || !(r.p_wae >= 0.0 && r.p_wae <= 1.0)) {
            throw ValidationError(where + "posterior outside [0,1]");
        }
        r.dialect = majority_dialect(r.p_aae, r.p_wae);
        if (given && *given != r.dialect) {
            throw ValidationError(where + "dialect column disagrees with the posteriors");
        }
    } else if (given) {
        r.dialect = *given;
        r.p_aae = *given == Dialect::aae ? 1.0 : 0.0;
        r.p_wae = 1.0 - r.p_aae;
    } else {
        throw ValidationError(where + "needs either p_aae and p_wae or a dialect");
    }
    return r;
}

Dataset finish(std::vector<Record> records) {
    Dataset d{Scheme::four_class, std::move(records)};
    d.validate();
    return d;
}

}  // namespace

Dataset parse_csv(std::string_view contents) {
    const auto rows = csv::parse(contents);
    if (rows.empty()) throw ValidationError("csv: missing header");
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < rows[0].fields.size(); ++i) column[rows[0].fields[i]] = i;
    for (const char* required : {"id", "text", "label"}) {
        if (!column.contains(required)) throw ValidationError(std::string("csv: missing required column '") + required + "'");
    }
    const bool posteriors = column.contains("p_aae") && column.contains("p_wae");
    if (!posteriors && !column.contains("dialect")) {
        throw ValidationError("csv: needs columns p_aae and p_wae, or dialect");
    }

    std::vector<Record> records;
    records.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& fields = rows[r].fields;
        const std::string where = row_prefix(r, rows[r].line);
        if (fields.size() != rows[0].fields.size()) {
            throw ValidationError(where + "expected " + std::to_string(rows[0].fields.size()) + " fields, got " +
                                  std::to_string(fields.size()));
        }
        auto get = [&](const char* name) -> std::optional<std::string> {
            auto it = column.find(name);
            if (it == column.end()) return std::nullopt;
            return fields[it->second];
        };
        records.push_back(make_record(
            RawRow{get("id"), get("text"), get("label"), get("p_aae"), get("p_wae"), get("dialect")}, where));
    }
    return finish(std::move(records));
}

Dataset parse_jsonl(std::string_view contents) {
    std::vector<Record> records;
    std::istringstream in{std::string(contents)};
    std::string line;
    std::size_t line_no = 0, row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++row;
        const std::string where = row_prefix(row, line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(where + "invalid JSON: " + e.what());
        }
        if (!j.is_object()) throw ValidationError(where + "expected a JSON object");
        auto get = [&](const char* name) -> std::optional<std::string> {
            auto it = j.find(name);
            if (it == j.end() || it->is_null()) return std::nullopt;
            if (it->is_string()) return it->get<std::string>();
            if (it->is_number_float()) return format_double(it->get<double>());
            if (it->is_number()) return it->dump();
            throw ValidationError(where + "field '" + name + "' has an unsupported type");
        };
        records.push_back(make_record(
            RawRow{get("id"), get("text"), get("label"), get("p_aae"), get("p_wae"), get("dialect")}, where));
    }
    return finish(std::move(records));
}

Dataset ingest(const std::filesystem::path& path, std::optional<Format> format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read dataset " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const Format f = format.value_or(format_for(path));
    return f == Format::jsonl ? parse_jsonl(buf.str()) : parse_csv(buf.str());
}

std::string export_csv(const Dataset& d) {
    std::string out = "id,text,label,p_aae,p_wae,dialect\n";
    for (const auto& r : d.records) {
        const std::string fields[] = {r.id,
                                      r.text,
                                      std::string(to_string(r.label)),
                                      format_double(r.p_aae),
                                      format_double(r.p_wae),
                                      std::string(to_string(r.dialect))};
        out += csv::format_row(fields);
    }
    return out;
}

void save_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << export_csv(d);
}

Dataset collapse_two_class(const Dataset& d) {
    if (d.scheme == Scheme::two_class) throw ValidationError("dataset is already two-class");
    Dataset out{Scheme::two_class, d.records};
    for (auto& r : out.records) {
        r.label = (r.label == Label::abusive || r.label == Label::hateful) ? Label::abusive : Label::normal;
    }
    return out;
}

namespace {

void require_both_dialects(const CellCounts& counts) {
    for (Dialect z : kDialects) {
        if (counts.total(z) == 0) {
            throw ValidationError("dataset has no " + std::string(to_string(z)) + " records");
        }
    }
}

}  // namespace

SamplingSpec make_case1_spec(const Dataset& d, std::uint64_t seed) {
    const CellCounts available = count_cells(d);
    require_both_dialects(available);
    SamplingSpec spec{available, seed, {}};

    const Dialect large = available.total(Dialect::wae) >= available.total(Dialect::aae) ? Dialect::wae : Dialect::aae;
    const Dialect small = large == Dialect::wae ? Dialect::aae : Dialect::wae;
    const std::size_t target = available.total(small);
    const std::size_t supply = available.total(large);

    // Largest-remainder apportionment of `target` over the large subgroup's cells.
    const auto labels = labels_for(d.scheme);
    std::vector<std::size_t> remainder(labels.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < labels.size(); ++c) {
        const std::size_t scaled = available.at(labels[c], large) * target;
        spec.counts.at(labels[c], large) = scaled / supply;
        remainder[c] = scaled % supply;
        assigned += scaled / supply;
    }
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < target; ++k) {
        ++spec.counts.at(labels[order[k]], large);
        ++assigned;
    }
    return spec;
}

SamplingSpec make_case2_spec(const Dataset& d, std::uint64_t seed) {
    const CellCounts available = count_cells(d);
    require_both_dialects(available);
    SamplingSpec spec{CellCounts(d.scheme), seed, {}};
    for (Label l : labels_for(d.scheme)) {
        const std::size_t n = std::min(available.at(l, Dialect::aae), available.at(l, Dialect::wae));
        if (n == 0) {
            spec.warnings.push_back("label " + std::string(to_string(l)) +
                                    " is missing from one dialect; its cells are set to 0");
        }
        spec.counts.at(l, Dialect::aae) = n;
        spec.counts.at(l, Dialect::wae) = n;
    }
    return spec;
}

namespace {

std::vector<std::vector<std::size_t>> cell_members(const Dataset& d) {
    std::vector<std::vector<std::size_t>> members(class_count(d.scheme) * 2);
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        members[class_index(r.label, d.scheme) * 2 + dialect_index(r.dialect)].push_back(i);
    }
    return members;
}

Dataset gather(const Dataset& d, const std::vector<std::size_t>& indices) {
    Dataset out{d.scheme, {}};
    out.records.reserve(indices.size());
    for (auto i : indices) out.records.push_back(d.records[i]);
    return out;
}

}  // namespace

Dataset resample(const Dataset& d, const SamplingSpec& spec) {
    if (spec.counts.scheme() != d.scheme) throw ValidationError("sampling spec scheme does not match the dataset");
    auto members = cell_members(d);
    Rng rng(spec.seed);
    std::vector<std::size_t> chosen;
    const auto labels = labels_for(d.scheme);
    for (std::size_t c = 0; c < labels.size(); ++c) {
        for (Dialect z : kDialects) {
            auto& pool = members[c * 2 + dialect_index(z)];
            const std::size_t want = spec.counts.at(labels[c], z);
            if (want > pool.size()) {
                throw ValidationError("cell " + std::string(to_string(labels[c])) + "/" + std::string(to_string(z)) +
                                      ": requested " + std::to_string(want) + ", available " +
                                      std::to_string(pool.size()));
            }
            for (std::size_t k = 0; k < want; ++k) {
                const auto j = k + static_cast<std::size_t>(rng.below(pool.size() - k));
                std::swap(pool[k], pool[j]);
                chosen.push_back(pool[k]);
            }
        }
    }
    rng.shuffle(std::span(chosen));
    return gather(d, chosen);
}

Dataset shuffle(const Dataset& d, std::uint64_t seed) {
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span(order));
    return gather(d, order);
}

std::pair<Dataset, Dataset> split(const Dataset& d, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must be in (0, 1)");
    auto members = cell_members(d);
    Rng rng(seed);
    std::vector<bool> is_test(d.size(), false);
    for (auto& pool : members) {
        rng.shuffle(std::span(pool));
        const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(pool.size()) * test_fraction));
        for (std::size_t k = 0; k < n_test; ++k) is_test[pool[k]] = true;
    }
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < d.size(); ++i) (is_test[i] ? test : train).push_back(i);
    return {gather(d, train), gather(d, test)};
}

void SynthSpec::validate() const {
    if (counts.scheme() != Scheme::four_class) throw ValidationError("synthetic counts must be four-class");
    if (!(beta >= 0.0 && beta < 1.0)) throw ValidationError("beta must be in [0, 1)");
    if (class_pool == 0 || dialect_pool == 0 || noise_pool == 0) throw ValidationError("token pools must be non-empty");
    if (!(class_fidelity > 0.0 && class_fidelity <= 1.0)) throw ValidationError("class_fidelity must be in (0, 1]");
    if (!(decoration_rate >= 0.0 && decoration_rate <= 1.0)) throw ValidationError("decoration_rate must be in [0, 1]");
}

Dataset generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    static constexpr std::array<const char*, 4> kClassPrefix{"nrm", "spm", "abu", "hat"};
    static constexpr std::array<const char*, 2> kDialectPrefix{"aav", "wav"};

    struct Draft {
        Label generated;
        Dialect dialect;
    };
    std::vector<Draft> drafts;
    for (Label l : kFourClassLabels) {
        for (Dialect z : kDialects) drafts.insert(drafts.end(), spec.counts.at(l, z), Draft{l, z});
    }
    Rng rng(spec.seed);
    rng.shuffle(std::span(drafts));

    Dataset d{Scheme::four_class, {}};
    d.records.reserve(drafts.size());
    const int width = static_cast<int>(std::to_string(std::max<std::size_t>(drafts.size(), 1)).size());
    for (std::size_t i = 0; i < drafts.size(); ++i) {
        const auto [generated, dialect] = drafts[i];
        std::vector<std::string> words;
        for (std::size_t k = 0; k < spec.class_tokens; ++k) {
            auto cls = static_cast<std::size_t>(generated);
            if (!rng.bernoulli(spec.class_fidelity)) cls = (cls + 1 + rng.below(3)) % 4;
            words.push_back(kClassPrefix[cls] + std::to_string(rng.below(spec.class_pool)));
        }
        for (std::size_t k = 0; k < spec.dialect_tokens; ++k) {
            words.push_back(kDialectPrefix[dialect_index(dialect)] + std::to_string(rng.below(spec.dialect_pool)));
        }
        for (std::size_t k = 0; k < spec.noise_tokens; ++k) words.push_back("w" + std::to_string(rng.below(spec.noise_pool)));
        rng.shuffle(std::span(words));

        std::string text;
        if (rng.bernoulli(spec.decoration_rate)) text = "@u" + std::to_string(rng.below(1000)) + " ";
        for (std::size_t k = 0; k < words.size(); ++k) text += (k ? " " : "") + words[k];
        if (rng.bernoulli(spec.decoration_rate)) text += " https://t.co/" + std::to_string(rng.below(100000));

        Record r;
        std::string num = std::to_string(i + 1);
        r.id = "syn" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        r.text = std::move(text);
        r.label = generated;
        if (generated == Label::normal && dialect == Dialect::aae && rng.bernoulli(spec.beta)) r.label = Label::abusive;
        const double major = std::round((0.55 + 0.45 * rng.uniform()) * 1000.0) / 1000.0;
        r.p_aae = dialect == Dialect::aae ? major : std::round((1.0 - major) * 1000.0) / 1000.0;
        r.p_wae = dialect == Dialect::wae ? major : std::round((1.0 - major) * 1000.0) / 1000.0;
        r.dialect = dialect;
        d.records.push_back(std::move(r));
    }
    return d;
}

}  // namespace debias::corpus
