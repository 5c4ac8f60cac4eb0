// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace debias {

enum class Label { normal = 0, spam = 1, abusive = 2, hateful = 3 };

/// Sensitive attribute. The adversary predicts index 0 for AAE and 1 for WAE;
/// fairness gaps treat AAE as z=1.
enum class Dialect { aae = 0, wae = 1 };

enum class Scheme { four_class, two_class };

inline constexpr std::array<Label, 4> kFourClassLabels{Label::normal, Label::spam, Label::abusive,
                                                        Label::hateful};
inline constexpr std::array<Label, 2> kTwoClassLabels{Label::normal, Label::abusive};
inline constexpr std::array<Dialect, 2> kDialects{Dialect::aae, Dialect::wae};

/// Labels in class-index order for the scheme.
std::span<const Label> labels_for(Scheme scheme);
std::size_t class_count(Scheme scheme);
/// Class index of a label; throws ValidationError if the label is not in the scheme.
std::size_t class_index(Label label, Scheme scheme);
Label label_at(std::size_t index, Scheme scheme);
bool in_scheme(Label label, Scheme scheme);

std::string_view to_string(Label label);
std::string_view to_string(Dialect dialect);
std::string_view to_string(Scheme scheme);
std::optional<Label> parse_label(std::string_view text);
std::optional<Dialect> parse_dialect(std::string_view text);
std::optional<Scheme> parse_scheme(std::string_view text);

inline std::size_t dialect_index(Dialect d) { return static_cast<std::size_t>(d); }

}  // namespace debias
