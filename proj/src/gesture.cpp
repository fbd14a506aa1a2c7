#include "comhom/gesture.hpp"

#include <array>

#include "comhom/error.hpp"

namespace comhom::data {

namespace {
const std::array<std::string, 5> kDirectionNames{"Up", "Down", "Left", "Right", "NoDir"};
const std::array<std::string, 5> kModifierNames{"Thumb", "Pinch", "Fist", "Open", "NoMod"};
}  // namespace

int class_index(const GestureLabel& label) {
    const int d = static_cast<int>(label.direction);
    const int m = static_cast<int>(label.modifier);
    if (label.is_direction_single()) return d;
    if (label.is_modifier_single()) return 4 + m;
    if (label.is_combination()) return 8 + d * kActiveModifiers + m;
    return kRestClassIndex;
}

GestureLabel label_from_class_index(int index) {
    if (index < 0 || index > kRestClassIndex)
        throw LabelError("class index out of range: " + std::to_string(index));
    if (index < 4) return {static_cast<Direction>(index), Modifier::NoMod};
    if (index < 8) return {Direction::NoDir, static_cast<Modifier>(index - 4)};
    if (index < kNumStoredClasses) {
        const int c = index - 8;
        return {static_cast<Direction>(c / kActiveModifiers),
                static_cast<Modifier>(c % kActiveModifiers)};
    }
    return {Direction::NoDir, Modifier::NoMod};
}

int combo_class_index(const GestureLabel& label) {
    if (!label.is_combination())
        throw LabelError("not a combination label: " + label_name(label));
    return static_cast<int>(label.direction) * kActiveModifiers + static_cast<int>(label.modifier);
}

GestureLabel label_from_combo_index(int index) {
    if (index < 0 || index >= kNumComboClasses)
        throw LabelError("combination index out of range: " + std::to_string(index));
    return {static_cast<Direction>(index / kActiveModifiers),
            static_cast<Modifier>(index % kActiveModifiers)};
}

const std::string& direction_name(Direction d) {
    return kDirectionNames[static_cast<std::size_t>(d)];
}

const std::string& modifier_name(Modifier m) {
    return kModifierNames[static_cast<std::size_t>(m)];
}

Direction parse_direction(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (kDirectionNames[static_cast<std::size_t>(i)] == s) return static_cast<Direction>(i);
    throw LabelError("unknown direction label '" + s + "'");
}

Modifier parse_modifier(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (kModifierNames[static_cast<std::size_t>(i)] == s) return static_cast<Modifier>(i);
    throw LabelError("unknown modifier label '" + s + "'");
}

std::string label_name(const GestureLabel& label) {
    if (label.is_direction_single()) return direction_name(label.direction);
    if (label.is_modifier_single()) return modifier_name(label.modifier);
    if (label.is_rest()) return "Rest";
    return direction_name(label.direction) + "+" + modifier_name(label.modifier);
}

}  // namespace comhom::data
