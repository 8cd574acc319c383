#pragma once

// Test-only helpers: random networks and oracles that are independent of the
// library's Eigen-based evaluation and bound code.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <cstddef>
#include <initializer_list>
#include <random>
#include <vector>

#include "verix/bounds.hpp"
#include "verix/model.hpp"

namespace verix::testing {

using Rows = std::initializer_list<std::initializer_list<double>>;

inline Layer dense(Rows rows, std::initializer_list<double> bias) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = static_cast<Eigen::Index>(rows.begin()->size());
    Eigen::MatrixXd w(r, c);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        Eigen::Index j = 0;
        for (double v : row)
            w(i, j++) = v;
        ++i;
    }
    Eigen::VectorXd b(static_cast<Eigen::Index>(bias.size()));
    Eigen::Index k = 0;
    for (double v : bias)
        b[k++] = v;
    return Layer::dense(std::move(w), std::move(b));
}

inline Network make_network(std::size_t input_dim, std::vector<Layer> layers) {
    Network net;
    net.name = "test";
    net.input_dim = input_dim;
    net.layers = std::move(layers);
    std::size_t width = input_dim;
    for (const Layer& l : net.layers)
        if (l.is_dense())
            width = static_cast<std::size_t>(l.weights.rows());
    for (std::size_t i = 0; i < width; ++i)
        net.labels.push_back("class" + std::to_string(i));
    net.validate();
    return net;
}

/// Dense/ReLU stack with the given hidden widths and Gaussian parameters.
inline Network random_network(std::mt19937_64& rng, std::size_t input_dim, const std::vector<std::size_t>& hidden,
                              std::size_t outputs, bool unit_bounds = false) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Layer> layers;
    std::size_t width = input_dim;
    auto add_dense = [&](std::size_t out) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(width));
        Eigen::MatrixXd w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(width));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                w(r, c) = normal(rng) * scale;
        Eigen::VectorXd b(static_cast<Eigen::Index>(out));
        for (Eigen::Index r = 0; r < b.size(); ++r)
            b[r] = 0.1 * normal(rng);
        layers.push_back(Layer::dense(std::move(w), std::move(b)));
        width = out;
    };
    for (std::size_t h : hidden) {
        add_dense(h);
        layers.push_back(Layer::relu());
    }
    add_dense(outputs);
    Network net = make_network(input_dim, std::move(layers));
    if (unit_bounds)
        net.input_bounds = std::vector<Interval>(input_dim, Interval{0.0, 1.0});
    return net;
}

/// Straight-line evaluation with plain loops; shares no code with verix::forward.
inline std::vector<double> reference_eval(const Network& net, const std::vector<double>& x) {
    std::vector<double> h = x;
    for (const Layer& layer : net.layers) {
        if (!layer.is_dense()) {
            for (double& v : h)
                v = v > 0.0 ? v : 0.0;
            continue;
        }
        std::vector<double> out(static_cast<std::size_t>(layer.weights.rows()));
        for (std::size_t r = 0; r < out.size(); ++r) {
            double s = layer.bias[static_cast<Eigen::Index>(r)];
            for (std::size_t c = 0; c < h.size(); ++c)
                s += layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * h[c];
            out[r] = s;
        }
        h = std::move(out);
    }
    return h;
}

inline std::vector<double> uniform_point(std::mt19937_64& rng, const Box& box) {
    std::vector<double> x(box.dim());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        std::uniform_real_distribution<double> u(box.lo[k], box.hi[k]);
        x[i] = box.lo[k] == box.hi[k] ? box.lo[k] : u(rng);
    }
    return x;
}

inline Box random_box(std::mt19937_64& rng, std::size_t dim, double max_width) {
    std::uniform_real_distribution<double> centre(-1.0, 1.0);
    std::uniform_real_distribution<double> width(0.0, max_width);
    Box box;
    box.lo.resize(static_cast<Eigen::Index>(dim));
    box.hi.resize(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < box.lo.size(); ++i) {
        const double c = centre(rng);
        const double w = width(rng);
        box.lo[i] = c - 0.5 * w;
        box.hi[i] = c + 0.5 * w;
    }
    return box;
}

/// Best value of y_j - y_c found by random sampling followed by coordinate
/// descent from the best sample. Returns the maximizing point.
inline std::pair<double, std::vector<double>> attack(const Network& net, const Box& box, std::size_t c, std::size_t j,
                                                     std::size_t samples, std::mt19937_64& rng) {
    auto gap = [&](const std::vector<double>& x) {
        const auto y = reference_eval(net, x);
        return y[j] - y[c];
    };
    std::vector<double> best = uniform_point(rng, box);
    double best_gap = gap(best);
    for (std::size_t s = 1; s < samples; ++s) {
        auto x = uniform_point(rng, box);
        const double g = gap(x);
        if (g > best_gap) {
            best_gap = g;
            best = std::move(x);
        }
    }
    // coordinate descent over a grid of 9 values per coordinate
    for (int sweep = 0; sweep < 20; ++sweep) {
        bool improved = false;
        for (std::size_t i = 0; i < best.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const double keep = best[i];
            double best_v = keep;
            for (int t = 0; t <= 8; ++t) {
                best[i] = box.lo[k] + (box.hi[k] - box.lo[k]) * t / 8.0;
                const double g = gap(best);
                if (g > best_gap) {
                    best_gap = g;
                    best_v = best[i];
                    improved = true;
                }
            }
            best[i] = best_v;
        }
        if (!improved)
            break;
    }
    return {best_gap, best};
}

} // namespace verix::testing
