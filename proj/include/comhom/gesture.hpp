#pragma once

#include <string>

namespace comhom::data {

// Two-part gesture labels: a direction component and a modifier component.
// NoDir/NoMod mark an inactive component. Index order is fixed project-wide;
// class matrices, confusion rows, and head targets all use it.
enum class Direction { Up = 0, Down = 1, Left = 2, Right = 3, NoDir = 4 };
enum class Modifier { Thumb = 0, Pinch = 1, Fist = 2, Open = 3, NoMod = 4 };

inline constexpr int kNumDirections = 5;
inline constexpr int kNumModifiers = 5;
inline constexpr int kActiveDirections = 4;
inline constexpr int kActiveModifiers = 4;

struct GestureLabel {
    Direction direction = Direction::NoDir;
    Modifier modifier = Modifier::NoMod;

    bool operator==(const GestureLabel&) const = default;

    bool is_direction_single() const {
        return direction != Direction::NoDir && modifier == Modifier::NoMod;
    }
    bool is_modifier_single() const {
        return direction == Direction::NoDir && modifier != Modifier::NoMod;
    }
    bool is_single() const { return is_direction_single() || is_modifier_single(); }
    bool is_combination() const {
        return direction != Direction::NoDir && modifier != Modifier::NoMod;
    }
    // Legal as a prediction only; no stored item carries it.
    bool is_rest() const { return direction == Direction::NoDir && modifier == Modifier::NoMod; }
};

// 24 stored classes: 4 direction singles, 4 modifier singles, then 16
// combinations direction-major. Predictions may additionally be the rest
// label (NoDir, NoMod), class index 24, used as the outlier column.
inline constexpr int kNumStoredClasses = 24;
inline constexpr int kNumComboClasses = 16;
inline constexpr int kRestClassIndex = 24;
inline constexpr int kNumPredictionClasses = 25;

// Index into the 24 stored classes; rest maps to 24.
int class_index(const GestureLabel& label);
GestureLabel label_from_class_index(int index);

// Combination classes alone, direction-major in [0, 16); label must be a
// combination.
int combo_class_index(const GestureLabel& label);
GestureLabel label_from_combo_index(int index);

const std::string& direction_name(Direction d);
const std::string& modifier_name(Modifier m);
// Parse exact vocabulary ("Up", ..., "NoDir" / "Thumb", ..., "NoMod");
// anything else raises LabelError.
Direction parse_direction(const std::string& s);
Modifier parse_modifier(const std::string& s);

std::string label_name(const GestureLabel& label);  // e.g. "Up+Pinch", "Left", "Fist"

}  // namespace comhom::data
