// SPDX-License-Identifier: Apache-2.0
#include "debias/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "debias/csv.hpp"
#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias::model {

using ad::Tensor;

void EncoderConfig::validate() const {
    if (vocab_size < text::Vocabulary::kReserved) throw ValidationError("encoder vocab_size must be at least 2");
    if (embedding_dim == 0 || max_len == 0) throw ValidationError("encoder dims must be positive");
    if (hidden_dims.empty()) throw ValidationError("encoder needs at least one hidden layer");
    for (auto h : hidden_dims) {
        if (h == 0) throw ValidationError("encoder hidden dims must be positive");
    }
    if (representation_dim != hidden_dims.back()) {
        throw ValidationError("representation_dim must equal the last hidden dim");
    }
}

std::string_view to_string(Component c) {
    switch (c) {
        case Component::encoder: return "encoder";
        case Component::classifier: return "classifier";
        case Component::adversary: return "adversary";
    }
    return "?";
}

namespace {

Dense clone(const Dense& d) { return Dense{d.weight.clone(), d.bias.clone()}; }

Tensor uniform_weight(Rng& rng, std::size_t rows, std::size_t cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from({rows, cols}, std::move(v), true);
}

Dense make_dense(Rng& rng, std::size_t in, std::size_t out) {
    return Dense{uniform_weight(rng, in, out), Tensor::zeros({out}, true)};
}

}  // namespace

ModelBundle::ModelBundle(const ModelBundle& other)
    : config(other.config),
      n_classes(other.n_classes),
      embedding(other.embedding.defined() ? other.embedding.clone() : Tensor{}),
      classifier(other.classifier.weight.defined() ? clone(other.classifier) : Dense{}),
      adversary(other.adversary.weight.defined() ? clone(other.adversary) : Dense{}),
      frozen_(other.frozen_) {
    for (const auto& layer : other.encoder_layers) encoder_layers.push_back(clone(layer));
}

ModelBundle& ModelBundle::operator=(const ModelBundle& other) {
    if (this != &other) {
        ModelBundle copy(other);
        *this = std::move(copy);
    }
    return *this;
}

std::vector<Tensor> ModelBundle::parameters(Component c) const {
    std::vector<Tensor> out;
    switch (c) {
        case Component::encoder:
            out.push_back(embedding);
            for (const auto& layer : encoder_layers) {
                out.push_back(layer.weight);
                out.push_back(layer.bias);
            }
            break;
        case Component::classifier:
            out = {classifier.weight, classifier.bias};
            break;
        case Component::adversary:
            out = {adversary.weight, adversary.bias};
            break;
    }
    return out;
}

std::vector<Tensor> ModelBundle::all_parameters() const {
    std::vector<Tensor> out;
    for (auto c : {Component::encoder, Component::classifier, Component::adversary}) {
        auto p = parameters(c);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::vector<Tensor> ModelBundle::trainable_parameters() const {
    std::vector<Tensor> out;
    for (auto c : {Component::encoder, Component::classifier, Component::adversary}) {
        if (frozen(c)) continue;
        auto p = parameters(c);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

void ModelBundle::set_frozen(std::initializer_list<Component> components, bool frozen) {
    for (auto c : components) {
        frozen_[static_cast<std::size_t>(c)] = frozen;
        for (auto& p : parameters(c)) p.set_trainable(!frozen);
    }
}

void ModelBundle::zero_grad() {
    for (auto& p : all_parameters()) p.zero_grad();
}

std::string ModelBundle::component_bytes(Component c) const {
    std::string out;
    for (const auto& p : parameters(c)) {
        const auto values = p.values();
        const auto offset = out.size();
        out.resize(offset + values.size_bytes());
        std::memcpy(out.data() + offset, values.data(), values.size_bytes());
    }
    return out;
}

ModelBundle init_model(const EncoderConfig& cfg, std::size_t n_target_classes, std::uint64_t seed) {
    cfg.validate();
    if (n_target_classes != 2 && n_target_classes != 4) throw ValidationError("n_target_classes must be 2 or 4");
    ModelBundle b;
    b.config = cfg;
    b.config.seed = seed;
    b.n_classes = n_target_classes;
    Rng rng(seed);
    b.embedding = uniform_weight(rng, cfg.vocab_size, cfg.embedding_dim);
    std::size_t width = cfg.embedding_dim;
    for (auto h : cfg.hidden_dims) {
        b.encoder_layers.push_back(make_dense(rng, width, h));
        width = h;
    }
    b.classifier = make_dense(rng, width, n_target_classes);
    b.adversary = make_dense(rng, width, 2);
    return b;
}

Dense init_dense(std::size_t in, std::size_t out, std::uint64_t seed) {
    Rng rng(seed);
    return make_dense(rng, in, out);
}

Tensor encode_batch(const ModelBundle& bundle, ad::Tape& tape, std::span<const text::EncodedText> batch) {
    const std::size_t steps = bundle.config.max_len;
    std::vector<std::size_t> ids;
    std::vector<std::uint8_t> mask;
    ids.reserve(batch.size() * steps);
    mask.reserve(batch.size() * steps);
    for (const auto& enc : batch) {
        if (enc.ids.size() != steps || enc.mask.size() != steps) {
            throw ValidationError("encoded text length " + std::to_string(enc.ids.size()) + " does not match max_len " +
                                  std::to_string(steps));
        }
        ids.insert(ids.end(), enc.ids.begin(), enc.ids.end());
        mask.insert(mask.end(), enc.mask.begin(), enc.mask.end());
    }
    Tensor h = ad::embedding(tape, bundle.embedding, ids, batch.size(), steps);
    h = ad::mean_pool(tape, h, mask);
    for (const auto& layer : bundle.encoder_layers) h = ad::relu(tape, apply(layer, tape, h));
    return h;
}

Tensor apply(const Dense& layer, ad::Tape& tape, const Tensor& input) {
    return ad::linear(tape, input, layer.weight, layer.bias);
}

Tensor classify(const ModelBundle& bundle, ad::Tape& tape, const Tensor& reps) {
    return apply(bundle.classifier, tape, reps);
}

Tensor adversary_predict(const ModelBundle& bundle, ad::Tape& tape, const Tensor& reps) {
    return apply(bundle.adversary, tape, reps);
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<std::size_t> out(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 1; c < cols; ++c) {
            if (logits[r * cols + c] > logits[r * cols + out[r]]) out[r] = c;
        }
    }
    return out;
}

namespace {

void write_tensor(std::ostringstream& out, const std::string& name, const Tensor& t, bool last) {
    out << "    \"" << name << "\": {\"shape\": [";
    for (std::size_t i = 0; i < t.rank(); ++i) out << (i ? ", " : "") << t.dim(i);
    out << "], \"values\": [";
    const auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw std::runtime_error("checkpoint: tensor " + name + " holds a non-finite value");
        out << (i ? "," : "") << format_double17(v[i]);
    }
    out << "]}" << (last ? "\n" : ",\n");
}

std::vector<std::pair<std::string, Tensor>> named_tensors(const ModelBundle& b) {
    std::vector<std::pair<std::string, Tensor>> out{{"embedding", b.embedding}};
    for (std::size_t i = 0; i < b.encoder_layers.size(); ++i) {
        out.emplace_back("encoder." + std::to_string(i) + ".weight", b.encoder_layers[i].weight);
        out.emplace_back("encoder." + std::to_string(i) + ".bias", b.encoder_layers[i].bias);
    }
    out.emplace_back("classifier.weight", b.classifier.weight);
    out.emplace_back("classifier.bias", b.classifier.bias);
    out.emplace_back("adversary.weight", b.adversary.weight);
    out.emplace_back("adversary.bias", b.adversary.bias);
    return out;
}

Tensor read_tensor(const nlohmann::json& tensors, const std::string& name, const ad::Shape& expected) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("checkpoint: missing tensor '" + name + "'");
    auto shape = it->at("shape").get<ad::Shape>();
    if (shape != expected) {
        throw ValidationError("checkpoint: tensor '" + name + "' has shape " + ad::shape_string(shape) + ", expected " +
                              ad::shape_string(expected));
    }
    return Tensor::from(std::move(shape), it->at("values").get<std::vector<double>>(), true);
}

}  // namespace

std::string to_checkpoint(const ModelBundle& b) {
    std::ostringstream out;
    const auto& c = b.config;
    out << "{\n  \"format\": \"model-v1\",\n  \"config\": {\"vocab_size\": " << c.vocab_size
        << ", \"embedding_dim\": " << c.embedding_dim << ", \"hidden_dims\": [";
    for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) out << (i ? ", " : "") << c.hidden_dims[i];
    out << "], \"representation_dim\": " << c.representation_dim << ", \"max_len\": " << c.max_len
        << ", \"seed\": " << c.seed << "},\n";
    out << "  \"n_classes\": " << b.n_classes << ",\n";
    out << "  \"frozen\": {\"encoder\": " << (b.frozen(Component::encoder) ? "true" : "false")
        << ", \"classifier\": " << (b.frozen(Component::classifier) ? "true" : "false")
        << ", \"adversary\": " << (b.frozen(Component::adversary) ? "true" : "false") << "},\n";
    out << "  \"tensors\": {\n";
    const auto tensors = named_tensors(b);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        write_tensor(out, tensors[i].first, tensors[i].second, i + 1 == tensors.size());
    }
    out << "  }\n}\n";
    return out.str();
}

ModelBundle from_checkpoint(std::string_view json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "model-v1") throw ValidationError("checkpoint: expected format model-v1");
    try {
        ModelBundle b;
        const auto& c = j.at("config");
        b.config.vocab_size = c.at("vocab_size").get<std::size_t>();
        b.config.embedding_dim = c.at("embedding_dim").get<std::size_t>();
        b.config.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
        b.config.representation_dim = c.at("representation_dim").get<std::size_t>();
        b.config.max_len = c.at("max_len").get<std::size_t>();
        b.config.seed = c.at("seed").get<std::uint64_t>();
        b.config.validate();
        b.n_classes = j.at("n_classes").get<std::size_t>();
        if (b.n_classes != 2 && b.n_classes != 4) throw ValidationError("checkpoint: n_classes must be 2 or 4");
        const auto& t = j.at("tensors");
        b.embedding = read_tensor(t, "embedding", {b.config.vocab_size, b.config.embedding_dim});
        std::size_t width = b.config.embedding_dim;
        for (std::size_t i = 0; i < b.config.hidden_dims.size(); ++i) {
            const auto h = b.config.hidden_dims[i];
            const std::string prefix = "encoder." + std::to_string(i);
            b.encoder_layers.push_back(
                Dense{read_tensor(t, prefix + ".weight", {width, h}), read_tensor(t, prefix + ".bias", {h})});
            width = h;
        }
        b.classifier = Dense{read_tensor(t, "classifier.weight", {width, b.n_classes}),
                             read_tensor(t, "classifier.bias", {b.n_classes})};
        b.adversary = Dense{read_tensor(t, "adversary.weight", {width, 2}), read_tensor(t, "adversary.bias", {2})};
        const auto& f = j.at("frozen");
        b.set_frozen({Component::encoder}, f.at("encoder").get<bool>());
        b.set_frozen({Component::classifier}, f.at("classifier").get<bool>());
        b.set_frozen({Component::adversary}, f.at("adversary").get<bool>());
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_checkpoint(bundle);
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_checkpoint(buf.str());
}

}  // namespace debias::model
