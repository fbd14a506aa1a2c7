#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "comhom/gradcheck.hpp"

namespace comhom::audit {

struct AuditCheck {
    std::string name;  // layer kind or "composed"
    int point = 0;     // random-point index
    double max_rel_err = 0.0;
    bool passed = false;
};

struct AuditReport {
    std::vector<AuditCheck> checks;
    double max_rel_err = 0.0;
    bool passed = true;
};

// Finite-difference audit of the reverse-mode gradients, evaluated in
// double: every layer kind in isolation, then the composed graph (encoder,
// pairwise combination operator, both classifier heads, cross-entropy plus
// an active triplet hinge), each at `points` random parameter points. A
// check whose difference step lands on a relu kink is retried with a
// smaller step; real gradient errors fail at every step size.
AuditReport audit_autodiff(std::uint64_t seed, int points, const nn::GradCheckOptions& opt = {});

}  // namespace comhom::audit
