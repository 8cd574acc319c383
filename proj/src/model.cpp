#include "verix/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace verix {

namespace {

using nlohmann::json;

bool all_finite(std::span<const double> values) {
    for (double v : values)
        if (!std::isfinite(v))
            return false;
    return true;
}

std::string describe_layer(std::size_t index) {
    return "layer " + std::to_string(index);
}

} // namespace

Layer Layer::dense(Eigen::MatrixXd weights, Eigen::VectorXd bias) {
    Layer layer;
    layer.kind = LayerKind::dense;
    layer.weights = std::move(weights);
    layer.bias = std::move(bias);
    return layer;
}

Layer Layer::relu() {
    return Layer{};
}

void Network::validate() const {
    if (input_dim == 0)
        throw Error("network input_dim must be positive");
    if (labels.empty())
        throw Error("network must have at least one label");
    std::size_t width = input_dim;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const Layer& layer = layers[k];
        if (!layer.is_dense())
            continue;
        if (static_cast<std::size_t>(layer.weights.cols()) != width)
            throw Error(describe_layer(k) + " expects width " + std::to_string(layer.weights.cols()) +
                        " but receives " + std::to_string(width));
        if (layer.bias.size() != layer.weights.rows())
            throw Error(describe_layer(k) + " bias length does not match weight rows");
        if (!layer.weights.allFinite() || !layer.bias.allFinite())
            throw Error(describe_layer(k) + " has a non-finite parameter");
        width = static_cast<std::size_t>(layer.weights.rows());
    }
    if (width != labels.size())
        throw Error("final width " + std::to_string(width) + " does not match " +
                    std::to_string(labels.size()) + " labels");
    if (input_bounds) {
        if (input_bounds->size() != input_dim)
            throw Error("input_bounds length does not match input_dim");
        for (const Interval& iv : *input_bounds)
            if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi)
                throw Error("input_bounds entries must be finite with lo <= hi");
    }
}

std::size_t argmax(const Eigen::VectorXd& values) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i)
        if (values[i] > values[static_cast<Eigen::Index>(best)])
            best = static_cast<std::size_t>(i);
    return best;
}

Eigen::VectorXd forward(const Network& network, const Eigen::VectorXd& x) {
    Eigen::VectorXd h = x;
    for (const Layer& layer : network.layers) {
        if (layer.is_dense())
            h = layer.weights * h + layer.bias;
        else
            h = h.cwiseMax(0.0);
    }
    return h;
}

Logits infer(const Network& network, std::span<const double> x) {
    if (x.size() != network.input_dim)
        throw Error("input has " + std::to_string(x.size()) + " features, network expects " +
                    std::to_string(network.input_dim));
    if (!all_finite(x))
        throw Error("input contains a non-finite feature");
    Logits out;
    out.values = forward(network, to_vector(x));
    out.predicted = argmax(out.values);
    return out;
}

Network load_model(std::istream& source) {
    json doc;
    try {
        doc = json::parse(source);
    } catch (const json::out_of_range& e) {
        // 406: a numeric literal overflowed to infinity
        if (e.id == 406)
            throw Error(std::string("model has a non-finite parameter: ") + e.what());
        throw Error(std::string("malformed model document: ") + e.what());
    } catch (const json::exception& e) {
        throw Error(std::string("malformed model document: ") + e.what());
    }

    Network net;
    try {
        net.name = doc.at("name").get<std::string>();
        auto dim = doc.at("input_dim").get<long long>();
        if (dim <= 0)
            throw Error("input_dim must be positive");
        net.input_dim = static_cast<std::size_t>(dim);
        net.labels = doc.at("labels").get<std::vector<std::string>>();

        if (doc.contains("input_bounds") && !doc["input_bounds"].is_null()) {
            std::vector<Interval> bounds;
            for (const auto& pair : doc["input_bounds"]) {
                if (!pair.is_array() || pair.size() != 2)
                    throw Error("input_bounds entries must be [lo, hi] pairs");
                bounds.push_back({pair[0].get<double>(), pair[1].get<double>()});
            }
            net.input_bounds = std::move(bounds);
        }

        for (const auto& entry : doc.at("layers")) {
            const auto type = entry.at("type").get<std::string>();
            if (type == "relu") {
                net.layers.push_back(Layer::relu());
            } else if (type == "dense") {
                // null is how nlohmann serializes NaN/inf, so treat it as non-finite
                const auto& rows = entry.at("weights");
                const auto& bias = entry.at("bias");
                const auto n_rows = static_cast<Eigen::Index>(rows.size());
                const auto n_cols = n_rows > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
                Eigen::MatrixXd w(n_rows, n_cols);
                for (Eigen::Index r = 0; r < n_rows; ++r) {
                    const auto& row = rows[static_cast<std::size_t>(r)];
                    if (static_cast<Eigen::Index>(row.size()) != n_cols)
                        throw Error("dense weights must be rectangular");
                    for (Eigen::Index c = 0; c < n_cols; ++c) {
                        const auto& v = row[static_cast<std::size_t>(c)];
                        w(r, c) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
                    }
                }
                Eigen::VectorXd b(static_cast<Eigen::Index>(bias.size()));
                for (std::size_t i = 0; i < bias.size(); ++i)
                    b[static_cast<Eigen::Index>(i)] =
                        bias[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : bias[i].get<double>();
                net.layers.push_back(Layer::dense(std::move(w), std::move(b)));
            } else {
                throw Error("unknown layer type '" + type + "'");
            }
        }
    } catch (const json::exception& e) {
        throw Error(std::string("malformed model document: ") + e.what());
    }

    net.validate();
    return net;
}

Network load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open model file " + path);
    return load_model(in);
}

void save_model(const Network& network, std::ostream& sink) {
    json doc;
    doc["name"] = network.name;
    doc["input_dim"] = network.input_dim;
    doc["labels"] = network.labels;
    if (network.input_bounds) {
        json bounds = json::array();
        for (const Interval& iv : *network.input_bounds)
            bounds.push_back({iv.lo, iv.hi});
        doc["input_bounds"] = bounds;
    }
    json layers = json::array();
    for (const Layer& layer : network.layers) {
        if (!layer.is_dense()) {
            layers.push_back({{"type", "relu"}});
            continue;
        }
        json rows = json::array();
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                row.push_back(layer.weights(r, c));
            rows.push_back(std::move(row));
        }
        layers.push_back({{"type", "dense"}, {"weights", rows}, {"bias", to_std(layer.bias)}});
    }
    doc["layers"] = layers;
    sink << doc.dump(1) << '\n';
}

std::vector<Sample> load_dataset(std::istream& source, std::size_t input_dim) {
    std::vector<Sample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;

        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ','))
            fields.push_back(field);
        if (!line.empty() && line.back() == ',')
            fields.emplace_back();

        if (fields.size() != input_dim && fields.size() != input_dim + 1)
            throw Error("row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(input_dim) + " or " +
                        std::to_string(input_dim + 1));

        Sample sample;
        sample.features.reserve(input_dim);
        for (std::size_t i = 0; i < input_dim; ++i) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(fields[i], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || fields[i].find_first_not_of(" \t", used) != std::string::npos || !std::isfinite(v))
                throw Error("row " + std::to_string(line_no) + " field " + std::to_string(i + 1) +
                            " is not a finite number: '" + fields[i] + "'");
            sample.features.push_back(v);
        }
        if (fields.size() == input_dim + 1) {
            std::size_t used = 0;
            long long label = -1;
            try {
                label = std::stoll(fields.back(), &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || label < 0 || fields.back().find_first_not_of(" \t", used) != std::string::npos)
                throw Error("row " + std::to_string(line_no) + " has an invalid label '" + fields.back() + "'");
            sample.label = static_cast<std::size_t>(label);
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::vector<Sample> load_dataset_file(const std::string& path, std::size_t input_dim) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open dataset file " + path);
    return load_dataset(in, input_dim);
}

} // namespace verix
