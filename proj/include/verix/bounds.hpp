#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "verix/model.hpp"
#include "verix/perturbation.hpp"

namespace verix {

/// Axis-aligned input region, one [lo, hi] interval per feature.
struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    static Box point(const Eigen::VectorXd& x) { return {x, x}; }

    std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }
    Eigen::VectorXd center() const { return 0.5 * (lo + hi); }
    Eigen::VectorXd widths() const { return hi - lo; }
    bool contains(const Eigen::VectorXd& x) const;

    /// Throws Error unless lo <= hi elementwise and every entry is finite.
    void validate() const;
};

struct OutputBounds {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

/// Affine under- and over-estimators of every output over a box:
/// lower_coeffs * x + lower_const <= f(x) <= upper_coeffs * x + upper_const.
struct LinearBounds {
    Eigen::MatrixXd lower_coeffs;
    Eigen::MatrixXd upper_coeffs;
    Eigen::VectorXd lower_const;
    Eigen::VectorXd upper_const;

    OutputBounds concretize(const Box& box) const;
};

enum class BoundMethod { ibp, crown };

/// Interval enclosures of the input to every layer; entry k is the input of
/// layer k and the last entry is the network output.
std::vector<Box> ibp_layer_bounds(const Network& network, const Box& box);

OutputBounds ibp_bounds(const Network& network, const Box& box);

/// Backward linear relaxation using IBP for the intermediate ReLU bounds.
LinearBounds crown_linear_bounds(const Network& network, const Box& box);
OutputBounds crown_bounds(const Network& network, const Box& box);

/// Backward linear relaxation over caller-supplied layer input enclosures
/// (same layout as ibp_layer_bounds).
LinearBounds crown_linear_bounds(const Network& network, const Box& box, const std::vector<Box>& layer_inputs);

/// Layer input enclosures where every ReLU input is the intersection of its
/// IBP interval and a CROWN bound of the preceding sub-network. Costs one
/// backward pass per ReLU layer; the verifier uses it at every node.
std::vector<Box> refined_layer_bounds(const Network& network, const Box& box);

OutputBounds compute_bounds(const Network& network, const Box& box, BoundMethod method);

/// Box with `free` coordinates set to [x_i - eps, x_i + eps] intersected with
/// the network's input bounds and all other coordinates fixed at x.
Box perturbation_box(const Network& network, std::span<const double> x, std::span<const std::size_t> free,
                     double epsilon);

/// The network restricted to its free coordinates: fixed features are folded
/// into the first dense layer's bias so bounds and search run in |free|
/// dimensions. When the first layer is not dense no folding happens and the
/// subspace spans every coordinate.
struct FreeSubspace {
    Network network;
    Box box;
    std::vector<std::size_t> coordinates;
    Eigen::VectorXd base;

    /// Embeds a point of the subspace back into the full input space.
    Eigen::VectorXd lift(const Eigen::VectorXd& z) const;
};

FreeSubspace restrict_to_free(const Network& network, std::span<const double> x, std::span<const std::size_t> free,
                              double epsilon);

/// Lower bound of the predicted class when only feature `feature` may move by epsilon.
double epsilon_lower_bound(const Network& network, std::span<const double> x, std::size_t feature,
                           const PerturbationSpec& spec, BoundMethod method);

} // namespace verix
