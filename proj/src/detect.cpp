#include "verix/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace verix {

namespace {

void check_labels(std::span<const double> scores, const std::vector<bool>& positives) {
    if (scores.size() != positives.size())
        throw Error("scores and labels have different lengths");
    const auto p = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
    if (p == 0 || p == positives.size())
        throw Error("AUROC needs at least one positive and one negative");
}

} // namespace

double max_softmax(const Eigen::VectorXd& logits) {
    const double top = logits.maxCoeff();
    return 1.0 / (logits.array() - top).exp().sum();
}

SampleScore score_sample(const Network& network, const Sample& sample, std::size_t id, const PipelineConfig& config) {
    SampleScore score;
    score.sample_id = id;
    try {
        const Logits logits = infer(network, sample.features);
        score.predicted = logits.predicted;
        score.max_confidence = max_softmax(logits.values);
        if (sample.label) {
            if (*sample.label >= network.output_dim())
                throw Error("label " + std::to_string(*sample.label) + " out of range");
            score.correct = *sample.label == logits.predicted;
        }
        const Traversal t = compute_traversal(network, sample.features, config.spec, config.order);
        const ExplanationResult r =
            explain(network, sample.features, t, config.spec, config.search, config.confidence_ranking);
        score.explanation_size = r.explanation.size();
        score.robust = r.robust;
        score.oracle_calls = r.stats.checkvalid_calls;
    } catch (const std::exception& e) {
        score.error = e.what();
    }
    return score;
}

std::vector<SampleScore> score_dataset(const Network& network, std::span<const Sample> samples,
                                       const PipelineConfig& config) {
    std::vector<SampleScore> scores(samples.size());
    const auto count = static_cast<long long>(samples.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < count; ++i) {
        const auto k = static_cast<std::size_t>(i);
        scores[k] = score_sample(network, samples[k], k, config);
    }
    return scores;
}

std::vector<SampleScore> score_dataset_reference(const Network& network, std::span<const Sample> samples,
                                                 const PipelineConfig& config) {
    std::vector<SampleScore> scores;
    scores.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        scores.push_back(score_sample(network, samples[i], i, config));
    return scores;
}

double auroc(std::span<const double> scores, const std::vector<bool>& positives) {
    check_labels(scores, positives);
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t p = 0; p < scores.size(); ++p) {
        if (!positives[p])
            continue;
        for (std::size_t n = 0; n < scores.size(); ++n) {
            if (positives[n])
                continue;
            ++pairs;
            if (scores[p] > scores[n])
                wins += 1.0;
            else if (scores[p] == scores[n])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positives) {
    check_labels(scores, positives);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const auto total_pos = static_cast<double>(std::count(positives.begin(), positives.end(), true));
    const auto total_neg = static_cast<double>(positives.size()) - total_pos;

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        // All samples sharing a score cross the threshold together.
        const double threshold = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == threshold; ++i)
            positives[order[i]] ? ++tp : ++fp;
        curve.points.emplace_back(static_cast<double>(fp) / total_neg, static_cast<double>(tp) / total_pos);
    }

    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto [x0, y0] = curve.points[i - 1];
        const auto [x1, y1] = curve.points[i];
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }
    curve.auroc = area;
    return curve;
}

double auroc_standard_error(double auc, std::size_t positives, std::size_t negatives) {
    const double np = static_cast<double>(positives);
    const double nn = static_cast<double>(negatives);
    const double q1 = auc / (2.0 - auc);
    const double q2 = 2.0 * auc * auc / (1.0 + auc);
    const double var =
        (auc * (1.0 - auc) + (np - 1.0) * (q1 - auc * auc) + (nn - 1.0) * (q2 - auc * auc)) / (np * nn);
    return std::sqrt(std::max(var, 0.0));
}

int knn_classify(std::span<const KnnPoint> train, std::size_t k, std::pair<double, double> query, bool normalize) {
    if (train.empty())
        throw Error("KNN needs a non-empty training set");
    if (k < 1 || k > train.size())
        throw Error("KNN requires 1 <= k <= training set size");

    double c_min = 0.0, c_scale = 1.0, s_min = 0.0, s_scale = 1.0;
    if (normalize) {
        auto [c_lo, c_hi] = std::minmax_element(train.begin(), train.end(),
                                                [](const KnnPoint& a, const KnnPoint& b) { return a.confidence < b.confidence; });
        auto [s_lo, s_hi] = std::minmax_element(train.begin(), train.end(),
                                                [](const KnnPoint& a, const KnnPoint& b) { return a.size < b.size; });
        c_min = c_lo->confidence;
        s_min = s_lo->size;
        const double c_range = c_hi->confidence - c_min;
        const double s_range = s_hi->size - s_min;
        c_scale = c_range > 0.0 ? 1.0 / c_range : 1.0;
        s_scale = s_range > 0.0 ? 1.0 / s_range : 1.0;
    }

    const double qc = (query.first - c_min) * c_scale;
    const double qs = (query.second - s_min) * s_scale;
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const double dc = (train[i].confidence - c_min) * c_scale - qc;
        const double ds = (train[i].size - s_min) * s_scale - qs;
        dist.emplace_back(dc * dc + ds * ds, i);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < k; ++i)
        ++votes[train[dist[i].second].label];
    int best = votes.begin()->first;
    std::size_t best_votes = 0;
    for (const auto& [label, count] : votes) {
        if (count > best_votes) {
            best = label;
            best_votes = count;
        }
    }
    return best;
}

} // namespace verix
