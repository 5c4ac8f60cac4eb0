// SPDX-License-Identifier: Apache-2.0
#include "debias/labels.hpp"

#include <algorithm>

#include "debias/error.hpp"

namespace debias {

std::span<const Label> labels_for(Scheme scheme) {
    if (scheme == Scheme::four_class) return kFourClassLabels;
    return kTwoClassLabels;
}

std::size_t class_count(Scheme scheme) { return labels_for(scheme).size(); }

bool in_scheme(Label label, Scheme scheme) {
    const auto labels = labels_for(scheme);
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::size_t class_index(Label label, Scheme scheme) {
    const auto labels = labels_for(scheme);
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
        throw ValidationError("label '" + std::string(to_string(label)) + "' is not part of the " +
                              std::string(to_string(scheme)) + " scheme");
    }
    return static_cast<std::size_t>(it - labels.begin());
}

Label label_at(std::size_t index, Scheme scheme) {
    const auto labels = labels_for(scheme);
    if (index >= labels.size()) throw ValidationError("class index " + std::to_string(index) + " out of range");
    return labels[index];
}

std::string_view to_string(Label label) {
    switch (label) {
        case Label::normal: return "normal";
        case Label::spam: return "spam";
        case Label::abusive: return "abusive";
        case Label::hateful: return "hateful";
    }
    return "?";
}

std::string_view to_string(Dialect dialect) { return dialect == Dialect::aae ? "AAE" : "WAE"; }

std::string_view to_string(Scheme scheme) { return scheme == Scheme::four_class ? "four-class" : "two-class"; }

std::optional<Label> parse_label(std::string_view text) {
    for (Label l : kFourClassLabels) {
        if (to_string(l) == text) return l;
    }
    return std::nullopt;
}

std::optional<Dialect> parse_dialect(std::string_view text) {
    if (text == "AAE") return Dialect::aae;
    if (text == "WAE") return Dialect::wae;
    return std::nullopt;
}

std::optional<Scheme> parse_scheme(std::string_view text) {
    if (text == "four-class") return Scheme::four_class;
    if (text == "two-class") return Scheme::two_class;
    return std::nullopt;
}

}  // namespace debias
