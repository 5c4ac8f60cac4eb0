// SPDX-License-Identifier: Apache-2.0
#include "debias/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "debias/corpus.hpp"
#include "debias/csv.hpp"
#include "debias/error.hpp"
#include "debias/eval.hpp"
#include "debias/model.hpp"
#include "debias/text.hpp"
#include "debias/train.hpp"

namespace debias::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

enum class Kind { u64, real, boolean, choice, list };

struct KeySpec {
    const char* key;
    const char* fallback;
    Kind kind;
    const char* choices = "";  // '|' separated, for Kind::choice
};

// clang-format off
const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = {
        {"seed", "0", Kind::u64},
        {"synth.count.normal.AAE", "800", Kind::u64},
        {"synth.count.normal.WAE", "800", Kind::u64},
        {"synth.count.spam.AAE", "250", Kind::u64},
        {"synth.count.spam.WAE", "250", Kind::u64},
        {"synth.count.abusive.AAE", "1600", Kind::u64},
        {"synth.count.abusive.WAE", "1600", Kind::u64},
        {"synth.count.hateful.AAE", "250", Kind::u64},
        {"synth.count.hateful.WAE", "250", Kind::u64},
        {"synth.class_pool", "30", Kind::u64},
        {"synth.dialect_pool", "20", Kind::u64},
        {"synth.noise_pool", "300", Kind::u64},
        {"synth.class_tokens", "3", Kind::u64},
        {"synth.dialect_tokens", "3", Kind::u64},
        {"synth.noise_tokens", "6", Kind::u64},
        {"synth.class_fidelity", "1", Kind::real},
        {"synth.beta", "0.3", Kind::real},
        {"synth.decoration_rate", "0.1", Kind::real},
        {"data.scheme", "four-class", Kind::choice, "four-class|two-class"},
        {"data.test_fraction", "0.2", Kind::real},
        {"sampling.case", "none", Kind::choice, "none|case1|case2"},
        {"vocab.max_size", "20000", Kind::u64},
        {"vocab.min_frequency", "2", Kind::u64},
        {"model.embedding_dim", "64", Kind::u64},
        {"model.hidden_dims", "128,64", Kind::list},
        {"model.max_len", "64", Kind::u64},
        {"train.technique", "baseline", Kind::choice, "baseline|alternating|gradient-negation"},
        {"train.alpha", "0.05", Kind::real},
        {"train.lambda", "1", Kind::real},
        {"train.rounds", "10", Kind::u64},
        {"train.epochs", "30", Kind::u64},
        {"train.epochs_per_phase", "1", Kind::u64},
        {"train.batch_size", "32", Kind::u64},
        {"train.learning_rate", "0.05", Kind::real},
        {"train.optimizer", "sgd", Kind::choice, "sgd|adam"},
        {"train.reset_adversary", "false", Kind::boolean},
        {"probe.epochs", "30", Kind::u64},
        {"probe.learning_rate", "0.1", Kind::real},
    };
    return table;
}
// clang-format on

const KeySpec* find_key(const std::string& key) {
    for (const auto& k : key_table()) {
        if (key == k.key) return &k;
    }
    return nullptr;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool parse_u64(const std::string& text, std::uint64_t& out) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtoull(text.c_str(), &end, 10);
    return errno == 0 && *end == '\0';
}

std::vector<std::size_t> parse_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::uint64_t v = 0;
        if (!parse_u64(trim(item), v) || v == 0) throw ValidationError("bad list entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("empty list");
    return out;
}

void check_value(const KeySpec& spec, const std::string& value) {
    bool ok = true;
    switch (spec.kind) {
        case Kind::u64: {
            std::uint64_t v;
            ok = parse_u64(value, v);
            break;
        }
        case Kind::real: {
            double v;
            ok = parse_double(value, v) && std::isfinite(v);
            break;
        }
        case Kind::boolean: ok = value == "true" || value == "false"; break;
        case Kind::choice: {
            ok = false;
            std::stringstream ss(spec.choices);
            std::string c;
            while (std::getline(ss, c, '|')) ok = ok || c == value;
            break;
        }
        case Kind::list:
            try {
                parse_list(value);
            } catch (const ValidationError&) {
                ok = false;
            }
            break;
    }
    if (!ok) throw ValidationError("invalid value '" + value + "' for " + spec.key);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

Settings::Settings() {
    for (const auto& k : key_table()) values_[k.key] = k.fallback;
}

bool Settings::known(const std::string& key) { return find_key(key) != nullptr; }

void Settings::set(const std::string& key, const std::string& value, const std::string& origin) {
    const KeySpec* spec = find_key(key);
    if (!spec) throw ValidationError(origin + ": unknown setting '" + key + "'");
    try {
        check_value(*spec, value);
    } catch (const ValidationError& e) {
        throw ValidationError(origin + ": " + e.what());
    }
    values_[key] = value;
}

void Settings::apply_file(std::string_view contents, const std::string& origin) {
    std::stringstream ss{std::string(contents)};
    std::string line;
    std::size_t number = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(ss, line)) {
        ++number;
        const std::string loc = origin + " line " + std::to_string(number);
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ValidationError(loc + ": expected key = value");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty()) throw ValidationError(loc + ": missing key");
        if (auto it = seen.find(key); it != seen.end()) {
            throw ValidationError(loc + ": duplicate key '" + key + "' (first on line " + std::to_string(it->second) +
                                  ")");
        }
        seen[key] = number;
        set(key, value, loc);
    }
}

const std::string& Settings::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("unregistered setting " + key);
    return it->second;
}

std::uint64_t Settings::get_u64(const std::string& key) const {
    std::uint64_t v = 0;
    parse_u64(get(key), v);
    return v;
}

double Settings::get_double(const std::string& key) const {
    double v = 0;
    parse_double(get(key), v);
    return v;
}

bool Settings::get_bool(const std::string& key) const { return get(key) == "true"; }

std::uint64_t Settings::hash() const {
    std::string canon;
    for (const auto& [k, v] : values_) canon += k + "=" + v + "\n";
    return fnv1a(canon);
}

namespace {

struct Invocation {
    std::string command;
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    std::vector<std::pair<std::string, std::string>> inputs;  // ordered name -> path
};

std::string input(const Invocation& inv, const std::string& name) {
    for (const auto& [k, v] : inv.inputs) {
        if (k == name) return v;
    }
    return {};
}

Settings resolve(const Invocation& inv) {
    Settings s;
    if (!inv.config_path.empty()) s.apply_file(read_file(inv.config_path), inv.config_path);
    if (const char* env = std::getenv("DEBIAS_SEED"); env && *env) s.set("seed", env, "environment DEBIAS_SEED");
    for (const auto& o : inv.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ValidationError("--set " + o + ": expected key=value");
        s.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)), "--set " + o);
    }
    if (inv.seed) s.set("seed", std::to_string(*inv.seed), "--seed");
    return s;
}

class Outputs {
public:
    Outputs(const Invocation& inv, std::vector<std::string> names) : dir_(inv.out), names_(std::move(names)) {
        names_.push_back("manifest.json");
        if (dir_.empty()) throw ValidationError("--out is required");
        if (fs::exists(dir_) && !fs::is_directory(dir_)) throw ValidationError(dir_.string() + " is not a directory");
        for (const auto& n : names_) {
            if (fs::exists(dir_ / n) && !inv.force) {
                throw ValidationError((dir_ / n).string() + " exists; pass --force to overwrite");
            }
        }
    }

    fs::path path(const std::string& name) const { return dir_ / name; }
    void write(const std::string& name, std::string_view contents) {
        fs::create_directories(dir_);
        write_file(dir_ / name, contents);
    }
    const std::vector<std::string>& names() const { return names_; }

private:
    fs::path dir_;
    std::vector<std::string> names_;
};

void write_manifest(Outputs& out, const Invocation& inv, const Settings& s, const std::vector<std::string>& warnings) {
    ojson m;
    m["format"] = "manifest-v1";
    m["command"] = inv.command;
    ojson inputs = ojson::object();
    for (const auto& [name, path] : inv.inputs) {
        if (path.empty()) continue;
        inputs[name] = {{"path", path}, {"fnv1a", hex(fnv1a(read_file(path)))}};
    }
    m["inputs"] = inputs;
    ojson settings = ojson::object();
    for (const auto& [k, v] : s.values()) settings[k] = v;
    m["settings"] = settings;
    m["config_hash"] = hex(s.hash());
    m["seed"] = s.get_u64("seed");
    m["versions"] = {{"debias", std::string(kVersion)},
                     {"checkpoint", "model-v1"},
                     {"report", "report-v1"},
                     {"vocab", "vocab-v1"}};
    ojson files = ojson::array();
    for (const auto& n : out.names()) {
        if (n != "manifest.json") files.push_back(n);
    }
    m["outputs"] = files;
    m["warnings"] = warnings;
    out.write("manifest.json", m.dump(2) + "\n");
}

Scheme scheme_setting(const Settings& s) { return *parse_scheme(s.get("data.scheme")); }

corpus::Dataset load_dataset(const std::string& path, Scheme scheme) {
    corpus::Dataset d = corpus::ingest(path);
    if (scheme == Scheme::two_class) d = corpus::collapse_two_class(d);
    return d;
}

train::TrainConfig train_config(const Settings& s) {
    train::TrainConfig c;
    c.technique = *train::parse_technique(s.get("train.technique"));
    c.alpha = s.get_double("train.alpha");
    c.lambda = s.get_double("train.lambda");
    c.rounds = s.get_u64("train.rounds");
    c.epochs = s.get_u64("train.epochs");
    c.epochs_per_phase = s.get_u64("train.epochs_per_phase");
    c.batch_size = s.get_u64("train.batch_size");
    c.learning_rate = s.get_double("train.learning_rate");
    c.optimizer = s.get("train.optimizer") == "adam" ? ad::OptimizerKind::adam : ad::OptimizerKind::sgd;
    c.reset_adversary = s.get_bool("train.reset_adversary");
    c.seed = s.get_u64("seed");
    c.label_scheme = scheme_setting(s);
    c.probe_epochs = s.get_u64("probe.epochs");
    c.probe_learning_rate = s.get_double("probe.learning_rate");
    if (c.technique == train::Technique::gradient_negation && !(c.lambda > 0.0)) {
        throw ValidationError("train.lambda must be in (0, 2] for gradient-negation");
    }
    c.validate();
    return c;
}

struct LoadedModel {
    model::ModelBundle bundle;
    text::Vocabulary vocab{20000, 2};
    Scheme scheme = Scheme::four_class;
};

LoadedModel load_model(const std::string& dir) {
    if (dir.empty()) throw ValidationError("--model is required");
    LoadedModel m;
    m.bundle = model::load_checkpoint(fs::path(dir) / "checkpoint.json");
    m.vocab = text::Vocabulary::load(fs::path(dir) / "vocab.txt");
    m.scheme = m.bundle.n_classes == 2 ? Scheme::two_class : Scheme::four_class;
    return m;
}

ojson probe_json(const eval::ProbeResult& p) {
    auto group = [](const eval::DialectMetrics& d) {
        ojson g;
        g["precision"] = d.precision ? ojson(*d.precision) : ojson(nullptr);
        g["recall"] = d.recall ? ojson(*d.recall) : ojson(nullptr);
        g["f1"] = d.f1 ? ojson(*d.f1) : ojson(nullptr);
        g["support"] = d.support;
        return g;
    };
    ojson j;
    j["format"] = "probe-v1";
    j["accuracy"] = p.accuracy;
    j["majority_rate"] = p.majority_rate;
    j["examples"] = p.examples;
    j["AAE"] = group(p.aae);
    j["WAE"] = group(p.wae);
    return j;
}

eval::ProbeResult probe_from_json(const std::string& contents, const std::string& origin) {
    try {
        const ojson j = ojson::parse(contents);
        if (j.at("format") != "probe-v1") throw ValidationError(origin + ": format is not probe-v1");
        auto group = [](const ojson& g) {
            eval::DialectMetrics d;
            auto opt = [&](const char* k) -> std::optional<double> {
                return g.at(k).is_null() ? std::nullopt : std::optional<double>(g.at(k).get<double>());
            };
            d.precision = opt("precision");
            d.recall = opt("recall");
            d.f1 = opt("f1");
            d.support = g.at("support").get<std::size_t>();
            return d;
        };
        eval::ProbeResult p;
        p.accuracy = j.at("accuracy").get<double>();
        p.majority_rate = j.at("majority_rate").get<double>();
        p.examples = j.at("examples").get<std::size_t>();
        p.aae = group(j.at("AAE"));
        p.wae = group(j.at("WAE"));
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(origin + ": " + e.what());
    }
}

std::string predictions_csv(const eval::PredictionSet& preds) {
    std::string out = "id,gold,predicted,dialect\n";
    for (const auto& p : preds.items) {
        const std::string row[] = {p.id, std::string(to_string(p.gold)), std::string(to_string(p.predicted)),
                                   std::string(to_string(p.dialect))};
        out += csv::format_row(row);
    }
    return out;
}

corpus::SynthSpec synth_spec(const Settings& s) {
    corpus::SynthSpec spec;
    for (Label l : kFourClassLabels) {
        for (Dialect z : kDialects) {
            spec.counts.at(l, z) =
                s.get_u64("synth.count." + std::string(to_string(l)) + "." + std::string(to_string(z)));
        }
    }
    spec.class_pool = s.get_u64("synth.class_pool");
    spec.dialect_pool = s.get_u64("synth.dialect_pool");
    spec.noise_pool = s.get_u64("synth.noise_pool");
    spec.class_tokens = s.get_u64("synth.class_tokens");
    spec.dialect_tokens = s.get_u64("synth.dialect_tokens");
    spec.noise_tokens = s.get_u64("synth.noise_tokens");
    spec.class_fidelity = s.get_double("synth.class_fidelity");
    spec.beta = s.get_double("synth.beta");
    spec.decoration_rate = s.get_double("synth.decoration_rate");
    spec.seed = s.get_u64("seed");
    spec.validate();
    return spec;
}

void cmd_synth(const Invocation& inv) {
    const Settings s = resolve(inv);
    Outputs out(inv, {"dataset.csv", "counts.json"});
    const corpus::Dataset d = corpus::generate_synthetic(synth_spec(s));
    out.write("dataset.csv", corpus::export_csv(d));
    out.write("counts.json", corpus::counts_json(d));
    write_manifest(out, inv, s, {});
}

void cmd_prepare(const Invocation& inv) {
    const Settings s = resolve(inv);
    const std::string in = input(inv, "input");
    if (in.empty()) throw ValidationError("--input is required");
    const double fraction = s.get_double("data.test_fraction");
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("data.test_fraction must be in [0, 1)");
    const bool split = fraction > 0.0;
    std::vector<std::string> files{"train.csv", "counts.train.json"};
    if (split) files.insert(files.end(), {"test.csv", "counts.test.json"});
    Outputs out(inv, files);

    const std::uint64_t seed = s.get_u64("seed");
    const corpus::Dataset all = load_dataset(in, scheme_setting(s));
    corpus::Dataset train_part = all, test_part;
    if (split) std::tie(train_part, test_part) = corpus::split(all, fraction, seed);

    std::vector<std::string> warnings;
    const std::string mode = s.get("sampling.case");
    if (mode != "none") {
        const corpus::SamplingSpec spec =
            mode == "case1" ? corpus::make_case1_spec(train_part, seed) : corpus::make_case2_spec(train_part, seed);
        warnings = spec.warnings;
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        train_part = corpus::resample(train_part, spec);
    }
    out.write("train.csv", corpus::export_csv(train_part));
    out.write("counts.train.json", corpus::counts_json(train_part));
    if (split) {
        out.write("test.csv", corpus::export_csv(test_part));
        out.write("counts.test.json", corpus::counts_json(test_part));
    }
    write_manifest(out, inv, s, warnings);
}

void cmd_train(const Invocation& inv) {
    const Settings s = resolve(inv);
    const train::TrainConfig cfg = train_config(s);
    const std::string train_path = input(inv, "train");
    if (train_path.empty()) throw ValidationError("--train is required");
    Outputs out(inv, {"checkpoint.json", "vocab.txt", "trace.csv"});

    const Scheme scheme = scheme_setting(s);
    const corpus::Dataset data = load_dataset(train_path, scheme);
    if (data.size() == 0) throw ValidationError(train_path + ": no records");
    const text::Vocabulary vocab =
        train::build_vocabulary(data, s.get_u64("vocab.max_size"), s.get_u64("vocab.min_frequency"));

    model::EncoderConfig ec;
    ec.vocab_size = vocab.size();
    ec.embedding_dim = s.get_u64("model.embedding_dim");
    ec.hidden_dims = parse_list(s.get("model.hidden_dims"));
    ec.representation_dim = ec.hidden_dims.back();
    ec.max_len = s.get_u64("model.max_len");
    model::ModelBundle bundle = model::init_model(ec, class_count(scheme), cfg.seed);

    const train::Examples examples = train::make_examples(data, vocab, ec.max_len);
    std::optional<train::Examples> monitor;
    if (const std::string m = input(inv, "monitor"); !m.empty()) {
        monitor = train::make_examples(load_dataset(m, scheme), vocab, ec.max_len);
    }
    const train::TrainTrace trace = train::train(bundle, examples, cfg, monitor ? &*monitor : nullptr);

    out.write("checkpoint.json", model::to_checkpoint(bundle));
    out.write("vocab.txt", vocab.serialize());
    out.write("trace.csv", trace.to_csv());
    write_manifest(out, inv, s, {});
}

void cmd_probe(const Invocation& inv) {
    const Settings s = resolve(inv);
    const train::TrainConfig cfg = train_config(s);
    const std::string train_path = input(inv, "train"), eval_path = input(inv, "eval");
    if (train_path.empty() || eval_path.empty()) throw ValidationError("--train and --eval are required");
    Outputs out(inv, {"probe.json"});
    const LoadedModel m = load_model(input(inv, "model"));
    const auto max_len = m.bundle.config.max_len;
    const auto tr = train::make_examples(load_dataset(train_path, m.scheme), m.vocab, max_len);
    const auto ev = train::make_examples(load_dataset(eval_path, m.scheme), m.vocab, max_len);
    const eval::ProbeResult r = train::probe_dialect(m.bundle, tr, ev, cfg);
    out.write("probe.json", probe_json(r).dump(2) + "\n");
    write_manifest(out, inv, s, {});
}

void cmd_evaluate(const Invocation& inv) {
    const Settings s = resolve(inv);
    const std::string data_path = input(inv, "data");
    if (data_path.empty()) throw ValidationError("--data is required");
    Outputs out(inv, {"report.json", "predictions.csv"});
    const LoadedModel m = load_model(input(inv, "model"));
    const auto ex = train::make_examples(load_dataset(data_path, m.scheme), m.vocab, m.bundle.config.max_len);
    if (ex.size() == 0) throw ValidationError(data_path + ": no records");
    const eval::PredictionSet preds = train::predict(m.bundle, ex);

    std::optional<eval::ProbeResult> probe;
    if (const std::string p = input(inv, "probe"); !p.empty()) probe = probe_from_json(read_file(p), p);
    std::vector<std::pair<std::string, std::string>> meta{{"model", input(inv, "model")},
                                                         {"data", data_path},
                                                         {"seed", s.get("seed")},
                                                         {"config_hash", hex(s.hash())}};
    const eval::FairnessReport report = eval::build_report(preds, probe, meta);
    out.write("report.json", eval::to_json(report));
    out.write("predictions.csv", predictions_csv(preds));
    write_manifest(out, inv, s, {});
}

void cmd_compare(const Invocation& inv) {
    const Settings s = resolve(inv);
    const std::string a = input(inv, "a"), b = input(inv, "b");
    if (a.empty() || b.empty()) throw ValidationError("--a and --b are required");
    Outputs out(inv, {"compare.csv"});
    auto load = [](const std::string& path) {
        try {
            return eval::report_from_json(read_file(path));
        } catch (const ValidationError& e) {
            throw ValidationError(path + ": " + e.what());
        }
    };
    out.write("compare.csv", eval::compare_csv(eval::compare_reports(load(a), load(b))));
    write_manifest(out, inv, s, {});
}

void dispatch(const Invocation& inv) {
    if (inv.command == "synth") return cmd_synth(inv);
    if (inv.command == "prepare") return cmd_prepare(inv);
    if (inv.command == "train") return cmd_train(inv);
    if (inv.command == "probe") return cmd_probe(inv);
    if (inv.command == "evaluate") return cmd_evaluate(inv);
    if (inv.command == "compare") return cmd_compare(inv);
    throw ValidationError("unknown command '" + inv.command + "'");
}

/// Rebuilds an invocation from a manifest: recorded inputs, every resolved
/// setting as an override, and a seed that DEBIAS_SEED cannot shadow.
Invocation from_manifest(const std::string& path, const std::string& out, bool force) {
    Invocation inv;
    try {
        const ojson m = ojson::parse(read_file(path));
        if (m.at("format") != "manifest-v1") throw ValidationError(path + ": format is not manifest-v1");
        inv.command = m.at("command").get<std::string>();
        if (inv.command == "replay") throw ValidationError(path + ": cannot replay a replay");
        for (const auto& [name, info] : m.at("inputs").items()) {
            inv.inputs.emplace_back(name, info.at("path").get<std::string>());
        }
        for (const auto& [k, v] : m.at("settings").items()) inv.overrides.push_back(k + "=" + v.get<std::string>());
        inv.seed = m.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    inv.out = out;
    inv.force = force;
    return inv;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Dialect-debiased abusive language classification"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Invocation inv;
    std::map<std::string, std::string> paths;
    std::string manifest_path;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", inv.config_path, "key = value settings file")->check(CLI::ExistingFile);
        sub->add_option("--set", inv.overrides, "override one setting, key=value");
        sub->add_option("--seed", inv.seed, "random seed");
        sub->add_option("--out", inv.out, "output directory")->required();
        sub->add_flag("--force", inv.force, "overwrite existing outputs");
    };
    auto path_opt = [&](CLI::App* sub, const std::string& name, const std::string& help, bool required) {
        auto* o = sub->add_option("--" + name, paths[name], help);
        if (required) o->required();
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with annotation bias");
    common(synth);
    auto* prepare = app.add_subcommand("prepare", "ingest, optionally collapse, split and resample a corpus");
    common(prepare);
    path_opt(prepare, "input", "CSV or JSONL corpus", true);
    auto* trn = app.add_subcommand("train", "train a model");
    common(trn);
    path_opt(trn, "train", "training CSV or JSONL", true);
    path_opt(trn, "monitor", "data the trace is computed on (default: training data)", false);
    std::string technique;
    trn->add_option("--technique", technique, "baseline, alternating or gradient-negation");
    auto* probe = app.add_subcommand("probe", "train a dialect probe on a frozen encoder");
    common(probe);
    path_opt(probe, "model", "model directory", true);
    path_opt(probe, "train", "probe training data", true);
    path_opt(probe, "eval", "probe evaluation data", true);
    auto* evaluate = app.add_subcommand("evaluate", "write a fairness report");
    common(evaluate);
    path_opt(evaluate, "model", "model directory", true);
    path_opt(evaluate, "data", "evaluation data", true);
    path_opt(evaluate, "probe", "probe.json to embed", false);
    auto* compare = app.add_subcommand("compare", "compare two reports");
    common(compare);
    path_opt(compare, "a", "report of model A", true);
    path_opt(compare, "b", "report of model B", true);
    auto* replay = app.add_subcommand("replay", "re-execute a run from its manifest");
    replay->add_option("--manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);
    replay->add_option("--out", inv.out, "output directory")->required();
    replay->add_flag("--force", inv.force, "overwrite existing outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidationError;
    }

    try {
        CLI::App* chosen = app.get_subcommands().front();
        if (chosen == replay) {
            dispatch(from_manifest(manifest_path, inv.out, inv.force));
            return kOk;
        }
        inv.command = chosen->get_name();
        const std::vector<std::pair<const char*, std::vector<const char*>>> order = {
            {"prepare", {"input"}}, {"train", {"train", "monitor"}}, {"probe", {"model", "train", "eval"}},
            {"evaluate", {"model", "data", "probe"}}, {"compare", {"a", "b"}}};
        for (const auto& [cmd, names] : order) {
            if (inv.command != cmd) continue;
            for (const char* n : names) {
                if (!paths[n].empty()) inv.inputs.emplace_back(n, paths[n]);
            }
        }
        if (!technique.empty()) inv.overrides.push_back("train.technique=" + technique);
        dispatch(inv);
        return kOk;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

}  // namespace debias::cli
