// verix command-line driver: explain, rank, bounds, verify, detect.
//
// Exit codes: 0 success, 1 error, 2 the input is epsilon-robust (explain only).

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "verix/bounds.hpp"
#include "verix/detect.hpp"
#include "verix/explain.hpp"
#include "verix/model.hpp"
#include "verix/parallel.hpp"
#include "verix/traversal.hpp"
#include "verix/verifier.hpp"

namespace {

using verix::Error;
using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRobust = 2;

void setup_logging() {
    auto logger = spdlog::stderr_logger_st("verix");
    logger->set_pattern("verix: %l: %v");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("VERIX_LOG");
    const std::string level = env ? env : "quiet";
    if (level == "trace")
        spdlog::set_level(spdlog::level::trace);
    else if (level == "info")
        spdlog::set_level(spdlog::level::info);
    else
        spdlog::set_level(spdlog::level::warn);
}

// Options shared by the subcommands that work on one input row.
struct InputOptions {
    std::string model;
    std::string data;
    std::optional<std::size_t> row;
    std::string input;
    double epsilon = 0.05;
    std::optional<double> min_box_width;
    std::size_t max_nodes = 100000;
    std::string out;
    int jobs = 0;
};

void add_model_options(CLI::App* cmd, InputOptions& o) {
    cmd->add_option("--model", o.model, "network JSON file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--epsilon", o.epsilon, "perturbation magnitude")->check(CLI::NonNegativeNumber);
    cmd->add_option("--min-box-width", o.min_box_width, "verifier leaf width (default 1e-4 * epsilon)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--max-nodes", o.max_nodes, "verifier node budget per query")->check(CLI::Range(1, 1 << 30));
    cmd->add_option("--out", o.out, "output path (default: standard output)");
    cmd->add_option("--jobs", o.jobs, "OpenMP threads (default: runtime choice)")->check(CLI::NonNegativeNumber);
}

void add_input_options(CLI::App* cmd, InputOptions& o) {
    add_model_options(cmd, o);
    auto* data = cmd->add_option("--data", o.data, "CSV dataset")->check(CLI::ExistingFile);
    cmd->add_option("--row", o.row, "0-based row of --data")->needs(data);
    cmd->add_option("--input", o.input, "inline comma-separated feature row")->excludes(data);
}

verix::PerturbationSpec make_spec(const InputOptions& o) {
    verix::PerturbationSpec spec = verix::PerturbationSpec::with_epsilon(o.epsilon);
    if (o.min_box_width)
        spec.min_box_width = *o.min_box_width;
    spec.max_nodes = o.max_nodes;
    spec.validate();
    return spec;
}

std::vector<double> read_input(const verix::Network& net, const InputOptions& o) {
    if (!o.input.empty()) {
        std::istringstream in(o.input);
        auto rows = verix::load_dataset(in, net.input_dim);
        if (rows.size() != 1)
            throw Error("--input must hold exactly one row");
        return rows.front().features;
    }
    if (o.data.empty())
        throw Error("give either --input or --data with --row");
    const auto rows = verix::load_dataset_file(o.data, net.input_dim);
    const std::size_t r = o.row.value_or(0);
    if (r >= rows.size())
        throw Error("row " + std::to_string(r) + " is out of range, dataset has " + std::to_string(rows.size()) +
                    " rows");
    return rows[r].features;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path);
    out << text << '\n';
}

void apply_jobs(int jobs) {
    if (jobs > 0)
        verix::set_num_threads(jobs);
}

// Enum flags are kept as text and parsed by the library, which owns the names.
const std::vector<std::string> kOrders = {"heuristic-deletion", "heuristic-reversal", "bound-ibp", "bound-crown",
                                          "index"};
const std::vector<std::string> kSearches = {"sequential", "binary", "quickxplain"};
const std::map<std::string, bool> kSwitch = {{"on", true}, {"off", false}};
const std::map<std::string, verix::BoundMethod> kBounds = {{"ibp", verix::BoundMethod::ibp},
                                                           {"crown", verix::BoundMethod::crown}};

// ---- explain ---------------------------------------------------------------

struct ExplainOptions {
    InputOptions in;
    std::string order = "bound-crown";
    std::string search = "binary";
    bool ranking = true;
    std::string mask_out;
    std::size_t mask_width = 0;
    std::size_t mask_height = 0;
};

int run_explain(const ExplainOptions& o) {
    apply_jobs(o.in.jobs);
    const verix::Network net = verix::load_model_file(o.in.model);
    const auto x = read_input(net, o.in);
    const auto spec = make_spec(o.in);

    const verix::Traversal traversal = verix::compute_traversal(net, x, spec, verix::parse_order_method(o.order));
    spdlog::info("traversal {} computed for {} features", traversal.method, traversal.order.size());
    const verix::ExplanationResult result =
        verix::explain(net, x, traversal, spec, verix::parse_search_method(o.search), o.ranking);
    spdlog::info("|A| = {}, |B| = {}, {} check_valid calls, {} solve calls, {} unknown", result.explanation.size(),
                 result.irrelevant.size(), result.stats.checkvalid_calls, result.stats.solve_calls,
                 result.stats.unknown_verdicts);
    emit(verix::explanation_json(result), o.in.out);

    if (!o.mask_out.empty()) {
        std::size_t w = o.mask_width;
        std::size_t h = o.mask_height;
        if (w == 0 && h == 0) {
            w = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(net.input_dim))));
            h = w;
        }
        if (w * h != net.input_dim)
            throw Error("mask " + std::to_string(w) + "x" + std::to_string(h) + " does not cover " +
                        std::to_string(net.input_dim) + " features");
        std::ofstream mask(o.mask_out);
        if (!mask)
            throw Error("cannot write " + o.mask_out);
        verix::write_pgm_mask(mask, result.explanation, w, h);
    }
    return result.robust ? kExitRobust : kExitOk;
}

// ---- rank ------------------------------------------------------------------

struct RankOptions {
    InputOptions in;
    std::string order = "bound-crown";
};

int run_rank(const RankOptions& o) {
    apply_jobs(o.in.jobs);
    const verix::Network net = verix::load_model_file(o.in.model);
    const auto x = read_input(net, o.in);
    const verix::Traversal t =
        verix::compute_traversal(net, x, make_spec(o.in), verix::parse_order_method(o.order));
    json doc;
    doc["method"] = t.method;
    doc["epsilon"] = o.in.epsilon;
    doc["order"] = t.order;
    doc["scores"] = t.scores;
    emit(doc.dump(2), o.in.out);
    return kExitOk;
}

// ---- bounds ----------------------------------------------------------------

struct BoundsOptions {
    InputOptions in;
    verix::BoundMethod method = verix::BoundMethod::crown;
    std::vector<std::size_t> free;
};

std::vector<std::size_t> all_features(std::size_t m) {
    std::vector<std::size_t> v(m);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

int run_bounds(const BoundsOptions& o) {
    const verix::Network net = verix::load_model_file(o.in.model);
    const auto x = read_input(net, o.in);
    const auto free = o.free.empty() ? all_features(net.input_dim) : o.free;
    const verix::Box box = verix::perturbation_box(net, x, free, o.in.epsilon);
    const verix::OutputBounds b = verix::compute_bounds(net, box, o.method);
    json doc;
    doc["method"] = o.method == verix::BoundMethod::ibp ? "ibp" : "crown";
    doc["epsilon"] = o.in.epsilon;
    doc["free"] = free;
    doc["logits"] = verix::to_std(verix::infer(net, x).values);
    doc["lower"] = verix::to_std(b.lower);
    doc["upper"] = verix::to_std(b.upper);
    emit(doc.dump(2), o.in.out);
    return kExitOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyOptions {
    InputOptions in;
    std::vector<std::size_t> free;
    std::optional<std::size_t> target;
};

int run_verify(const VerifyOptions& o) {
    const verix::Network net = verix::load_model_file(o.in.model);
    const auto x = read_input(net, o.in);
    const auto spec = make_spec(o.in);
    const auto free = o.free.empty() ? all_features(net.input_dim) : o.free;
    const verix::Logits y = verix::infer(net, x);

    std::vector<std::size_t> targets;
    if (o.target)
        targets.push_back(*o.target);
    else
        targets = verix::confidence_ranking(y);

    json doc;
    doc["predicted"] = y.predicted;
    doc["epsilon"] = o.in.epsilon;
    doc["free"] = free;
    doc["min_box_width"] = spec.min_box_width;
    doc["max_nodes"] = spec.max_nodes;
    json queries = json::array();
    bool valid = true;
    for (std::size_t j : targets) {
        const verix::Outcome out = verix::solve(net, {x, free, y.predicted, j}, spec);
        spdlog::info("class {}: {} after {} nodes", j, verix::to_string(out.verdict), out.nodes_expanded);
        valid = valid && out.verdict == verix::Verdict::unsat;
        json q;
        q["target"] = j;
        q["verdict"] = std::string(verix::to_string(out.verdict));
        q["witness"] = out.witness ? json(*out.witness) : json(nullptr);
        q["nodes_expanded"] = out.nodes_expanded;
        queries.push_back(std::move(q));
    }
    doc["valid"] = valid;
    doc["queries"] = std::move(queries);
    emit(doc.dump(2), o.in.out);
    return kExitOk;
}

// ---- detect ----------------------------------------------------------------

struct DetectOptions {
    InputOptions in;
    std::string order = "bound-crown";
    std::string search = "binary";
    bool ranking = true;
    std::string ood_data;
    std::string samples_out;
    std::size_t k = 5;
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
};

int run_detect(const DetectOptions& o) {
    apply_jobs(o.in.jobs);
    const verix::Network net = verix::load_model_file(o.in.model);
    if (o.in.data.empty())
        throw Error("detect needs --data");
    std::vector<verix::Sample> samples = verix::load_dataset_file(o.in.data, net.input_dim);
    const std::size_t in_count = samples.size();
    const bool ood_mode = !o.ood_data.empty();
    if (ood_mode) {
        auto extra = verix::load_dataset_file(o.ood_data, net.input_dim);
        samples.insert(samples.end(), extra.begin(), extra.end());
    }

    verix::PipelineConfig config;
    config.spec = make_spec(o.in);
    config.order = verix::parse_order_method(o.order);
    config.search = verix::parse_search_method(o.search);
    config.confidence_ranking = o.ranking;
    spdlog::info("scoring {} samples", samples.size());
    const auto scores = verix::score_dataset(net, samples, config);

    // positives: out-of-distribution rows, or misclassified rows
    std::vector<double> size_score;
    std::vector<double> conf_score;
    std::vector<bool> positive;
    std::vector<verix::KnnPoint> points;
    std::size_t errors = 0;
    std::size_t robust = 0;
    double size_sum = 0.0;
    std::size_t size_count = 0;
    for (const verix::SampleScore& s : scores) {
        bool pos = false;
        if (s.error) {
            ++errors;
            spdlog::warn("sample {}: {}", s.sample_id, *s.error);
            continue;
        }
        if (ood_mode) {
            pos = s.sample_id >= in_count;
        } else if (s.correct) {
            pos = !*s.correct;
        } else {
            ++errors;
            spdlog::warn("sample {} has no label", s.sample_id);
            continue;
        }
        if (s.robust)
            ++robust;
        else {
            size_sum += static_cast<double>(s.explanation_size);
            ++size_count;
        }
        size_score.push_back(static_cast<double>(s.explanation_size));
        conf_score.push_back(-s.max_confidence);
        positive.push_back(pos);
        points.push_back({s.max_confidence, static_cast<double>(s.explanation_size), pos ? 1 : 0});
    }

    const std::size_t n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    const std::size_t n_neg = positive.size() - n_pos;
    const double auc_size = verix::auroc(size_score, positive);
    const double auc_conf = verix::auroc(conf_score, positive);

    std::vector<std::size_t> perm(points.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(o.seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_train = static_cast<std::size_t>(o.train_fraction * static_cast<double>(points.size()));
    if (n_train < o.k || n_train >= points.size())
        throw Error("train split of " + std::to_string(n_train) + " rows cannot serve k = " + std::to_string(o.k) +
                    " with a non-empty test split");
    std::vector<verix::KnnPoint> train;
    for (std::size_t i = 0; i < n_train; ++i)
        train.push_back(points[perm[i]]);
    std::size_t hits = 0;
    for (std::size_t i = n_train; i < points.size(); ++i) {
        const verix::KnnPoint& q = points[perm[i]];
        hits += verix::knn_classify(train, o.k, {q.confidence, q.size}) == q.label ? 1 : 0;
    }
    const double knn_accuracy = static_cast<double>(hits) / static_cast<double>(points.size() - n_train);

    json doc;
    doc["mode"] = ood_mode ? "ood" : "incorrect";
    doc["samples"] = scores.size();
    doc["scored"] = positive.size();
    doc["errors"] = errors;
    doc["positives"] = n_pos;
    doc["negatives"] = n_neg;
    doc["robust"] = robust;
    doc["mean_size_nonrobust"] = size_count ? size_sum / static_cast<double>(size_count) : 0.0;
    doc["auroc_size"] = auc_size;
    doc["auroc_size_se"] = verix::auroc_standard_error(auc_size, n_pos, n_neg);
    doc["auroc_confidence"] = auc_conf;
    doc["auroc_confidence_se"] = verix::auroc_standard_error(auc_conf, n_pos, n_neg);
    doc["knn_accuracy"] = knn_accuracy;
    doc["k"] = o.k;
    doc["seed"] = o.seed;
    doc["train_fraction"] = o.train_fraction;
    doc["epsilon"] = o.in.epsilon;
    doc["order_method"] = o.order;
    doc["search"] = o.search;
    doc["confidence_ranking"] = o.ranking;
    emit(doc.dump(2), o.in.out);

    if (!o.samples_out.empty()) {
        std::ofstream csv(o.samples_out);
        if (!csv)
            throw Error("cannot write " + o.samples_out);
        csv << "id,source,predicted,correct,confidence,size,robust,oracle_calls,error\n";
        csv.precision(17);
        for (const verix::SampleScore& s : scores) {
            csv << s.sample_id << ',' << (s.sample_id >= in_count ? "ood" : "in") << ',' << s.predicted << ','
                << (s.correct ? (*s.correct ? "1" : "0") : "") << ',' << s.max_confidence << ','
                << s.explanation_size << ',' << (s.robust ? 1 : 0) << ',' << s.oracle_calls << ','
                << (s.error ? "\"" + *s.error + "\"" : "") << '\n';
        }
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"verified explanations for feed-forward ReLU classifiers"};
    app.require_subcommand(1);

    ExplainOptions ex;
    auto* explain = app.add_subcommand("explain", "compute a verified explanation for one input");
    add_input_options(explain, ex.in);
    explain->add_option("--order", ex.order, "traversal order")
        ->check(CLI::IsMember(kOrders));
    explain->add_option("--search", ex.search, "traversal strategy")
        ->check(CLI::IsMember(kSearches));
    explain->add_option("--ranking", ex.ranking, "confidence ranking of competing classes (on/off)")
        ->transform(CLI::CheckedTransformer(kSwitch, CLI::ignore_case));
    explain->add_option("--mask-out", ex.mask_out, "write the explanation as a PGM mask");
    explain->add_option("--mask-width", ex.mask_width, "mask width (default: square)");
    explain->add_option("--mask-height", ex.mask_height, "mask height (default: square)");

    RankOptions rk;
    auto* rank = app.add_subcommand("rank", "print the feature traversal order");
    add_input_options(rank, rk.in);
    rank->add_option("--order", rk.order, "traversal order")
        ->check(CLI::IsMember(kOrders));

    BoundsOptions bd;
    auto* bounds = app.add_subcommand("bounds", "bound the logits over the perturbation box");
    add_input_options(bounds, bd.in);
    bounds->add_option("--method", bd.method, "ibp or crown")
        ->transform(CLI::CheckedTransformer(kBounds, CLI::ignore_case));
    bounds->add_option("--free", bd.free, "perturbed features (default: all)")
        ->delimiter(',')
        ->check(CLI::NonNegativeNumber);

    VerifyOptions vf;
    auto* verify = app.add_subcommand("verify", "decide whether perturbing a subset can flip the prediction");
    add_input_options(verify, vf.in);
    verify->add_option("--free", vf.free, "perturbed features (default: all)")
        ->delimiter(',')
        ->check(CLI::NonNegativeNumber);
    verify->add_option("--target", vf.target, "single competing class (default: all, most likely first)");

    DetectOptions dt;
    auto* detect = app.add_subcommand("detect", "score a dataset and measure size-based detection");
    add_model_options(detect, dt.in);
    detect->add_option("--data", dt.in.data, "labelled CSV dataset")->required()->check(CLI::ExistingFile);
    detect->add_option("--ood-data", dt.ood_data, "out-of-distribution CSV; switches to OOD detection")
        ->check(CLI::ExistingFile);
    detect->add_option("--samples-out", dt.samples_out, "per-sample CSV");
    detect->add_option("--order", dt.order, "traversal order")
        ->check(CLI::IsMember(kOrders));
    detect->add_option("--search", dt.search, "traversal strategy")
        ->check(CLI::IsMember(kSearches));
    detect->add_option("--ranking", dt.ranking, "confidence ranking (on/off)")
        ->transform(CLI::CheckedTransformer(kSwitch, CLI::ignore_case));
    detect->add_option("--k", dt.k, "KNN neighbours")->check(CLI::PositiveNumber);
    detect->add_option("--train-fraction", dt.train_fraction, "KNN training share")->check(CLI::Range(0.0, 1.0));
    detect->add_option("--seed", dt.seed, "split seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitError;
    }

    try {
        if (*explain)
            return run_explain(ex);
        if (*rank)
            return run_rank(rk);
        if (*bounds)
            return run_bounds(bd);
        if (*verify)
            return run_verify(vf);
        return run_detect(dt);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitError;
    }
}
