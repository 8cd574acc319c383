#pragma once

#include <algorithm>
#include <cstddef>

namespace verix {

/// Slack for comparisons against bounds computed with ordinary rounding.
inline constexpr double kSlack = 1e-9;

/// l-infinity perturbation of magnitude `epsilon` plus the verifier's budget.
struct PerturbationSpec {
    double epsilon = 0.0;
    /// Allowed output deviation; only used for single-output (regression) networks.
    double delta = 0.0;
    /// Branch-and-bound stops splitting boxes narrower than this.
    double min_box_width = 1e-12;
    std::size_t max_nodes = 100000;

    /// Defaults: min_box_width = 1e-4 * epsilon, 100k nodes.
    static PerturbationSpec with_epsilon(double epsilon) {
        PerturbationSpec spec;
        spec.epsilon = epsilon;
        spec.min_box_width = std::max(1e-4 * epsilon, 1e-12);
        return spec;
    }

    void validate() const;
};

} // namespace verix
