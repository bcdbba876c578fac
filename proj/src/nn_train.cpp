#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rockseg/errors.hpp"
#include "rockseg/nn.hpp"
#include "rockseg/rng.hpp"

namespace rockseg::nn {

namespace {

// Parameter registry order: for every node, weight then bias (conv/tconv)
// or gamma then beta (batch norm).
template <typename Fn>
void for_each_param(BlockGraph& g, Fn&& fn) {
    for (auto& n : g.nodes) {
        if (n.kind == BlockKind::Conv || n.kind == BlockKind::TConv) {
            fn(n.weight, n.gweight);
            fn(n.bias, n.gbias);
        } else if (n.kind == BlockKind::BatchNorm) {
            fn(n.gamma, n.ggamma);
            fn(n.beta, n.gbeta);
        }
    }
}

} // namespace

void adam_step(BlockGraph& graph, AdamState& state, double lr) {
    if (state.m.empty()) {
        for_each_param(graph, [&](Tensor& p, Tensor&) {
            state.m.emplace_back(Tensor(1, 1, 1, 1, static_cast<int>(p.size())));
            state.v.emplace_back(Tensor(1, 1, 1, 1, static_cast<int>(p.size())));
        });
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    std::size_t idx = 0;
    for_each_param(graph, [&](Tensor& p, Tensor& g) {
        Tensor& m = state.m[idx];
        Tensor& v = state.v[idx];
        ++idx;
        for (std::int64_t k = 0; k < p.size(); ++k) {
            m.v[k] = state.beta1 * m.v[k] + (1 - state.beta1) * g.v[k];
            v.v[k] = state.beta2 * v.v[k] + (1 - state.beta2) * g.v[k] * g.v[k];
            const double mhat = m.v[k] / bc1;
            const double vhat = v.v[k] / bc2;
            p.v[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    });
}

namespace {

void check_sample(const BlockGraph& g, const Sample& s) {
    if (s.image.n != 1 || s.image.c != g.spec.in_channels)
        throw ShapeError("sample image shape does not match the network spec");
    if (static_cast<std::int64_t>(s.labels.size()) != s.image.spatial())
        throw ShapeError("sample labels do not match image spatial size");
}

Tensor assemble_batch(const std::vector<Sample>& set, const std::vector<std::size_t>& ids,
                      LabelBatch& truth) {
    const Sample& first = set[ids[0]];
    Tensor batch(static_cast<int>(ids.size()), first.image.c, first.image.d, first.image.h,
                 first.image.w);
    truth.n = batch.n;
    truth.d = batch.d;
    truth.h = batch.h;
    truth.w = batch.w;
    truth.labels.resize(static_cast<std::size_t>(batch.n) * batch.spatial());
    for (std::size_t b = 0; b < ids.size(); ++b) {
        const Sample& s = set[ids[b]];
        if (s.image.shape() != first.image.shape())
            throw ShapeError("dataset samples disagree on shape");
        std::copy(s.image.v.begin(), s.image.v.end(),
                  batch.v.begin() + static_cast<std::int64_t>(b) * first.image.size());
        std::copy(s.labels.begin(), s.labels.end(),
                  truth.labels.begin() + static_cast<std::int64_t>(b) * batch.spatial());
    }
    return batch;
}

} // namespace

ConfusionMatrix evaluate(BlockGraph& graph, const std::vector<Sample>& samples) {
    if (samples.empty()) throw ValidationError("evaluate: empty sample set");
    ConfusionMatrix cm;
    cm.n_phases = graph.spec.n_phases;
    cm.counts.assign(static_cast<std::size_t>(cm.n_phases) * cm.n_phases, 0);
    for (const Sample& s : samples) {
        check_sample(graph, s);
        Tensor logits = forward(graph, s.image, false);
        const std::int64_t spatial = logits.spatial();
        for (std::int64_t k = 0; k < spatial; ++k) {
            int best = 0;
            double bv = logits.plane(0, 0)[k];
            for (int ci = 1; ci < logits.c; ++ci)
                if (logits.plane(0, ci)[k] > bv) {
                    bv = logits.plane(0, ci)[k];
                    best = ci;
                }
            ++cm.counts[s.labels[k] * cm.n_phases + best];
        }
        cm.n_total += spatial;
    }
    return cm;
}

std::vector<std::uint8_t> predict_labels(BlockGraph& graph, const Sample& sample) {
    check_sample(graph, sample);
    Tensor logits = forward(graph, sample.image, false);
    std::vector<std::uint8_t> out(logits.spatial());
    for (std::int64_t k = 0; k < logits.spatial(); ++k) {
        int best = 0;
        double bv = logits.plane(0, 0)[k];
        for (int ci = 1; ci < logits.c; ++ci)
            if (logits.plane(0, ci)[k] > bv) {
                bv = logits.plane(0, ci)[k];
                best = ci;
            }
        out[k] = static_cast<std::uint8_t>(best);
    }
    return out;
}

TrainResult train(BlockGraph& graph, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty())
        throw ValidationError("train: empty dataset");
    if (cfg.learning_rate < 0) throw ValidationError("train: negative learning rate");
    for (const Sample& s : train_set) check_sample(graph, s);
    for (const Sample& s : val_set) check_sample(graph, s);

    TrainResult res;

    // Class weights from the training ground truth.
    res.weights_used.w.assign(graph.spec.n_phases, 1.0);
    if (cfg.weight_mode == WeightMode::Weighted) {
        std::vector<std::uint64_t> counts(graph.spec.n_phases, 0);
        std::uint64_t total = 0;
        for (const Sample& s : train_set) {
            for (std::uint8_t l : s.labels) ++counts[l];
            total += s.labels.size();
        }
        for (int i = 0; i < graph.spec.n_phases; ++i) {
            if (counts[i] == 0)
                throw ValidationError("train: phase " + std::to_string(i) +
                                      " absent from training truth, weighted mode undefined");
            res.weights_used.w[i] =
                static_cast<double>(total) / static_cast<double>(counts[i]);
        }
    }

    AdamState adam;
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    adam.eps = cfg.adam_eps;

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size(); // forces initial shuffle

    double best = -1.0;
    int bad_rounds = 0;
    Activations cache;

    auto validate = [&](std::int64_t step) {
        ConfusionMatrix cm = evaluate(graph, val_set);
        ValPoint vp;
        vp.step = step;
        vp.overall_accuracy = cm.overall_accuracy();
        vp.report = phase_report(cm);
        res.val_curve.push_back(vp);
        return vp.overall_accuracy;
    };

    for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
        std::vector<std::size_t> ids;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[rng.uniform_u64(0, i - 1)]);
                cursor = 0;
            }
            ids.push_back(order[cursor++]);
        }
        LabelBatch truth;
        Tensor batch = assemble_batch(train_set, ids, truth);
        BackwardResult br = backward(graph, batch, truth, res.weights_used, cache);
        if (!std::isfinite(br.loss))
            throw DivergenceError("train: non-finite loss at step " + std::to_string(step));
        res.loss_curve.emplace_back(step, br.loss);
        adam_step(graph, adam, cfg.learning_rate);
        res.steps_run = step;

        if (step % cfg.val_interval == 0 || step == cfg.max_steps) {
            const double acc = validate(step);
            if (acc > best + cfg.min_delta) {
                best = acc;
                bad_rounds = 0;
            } else if (++bad_rounds >= cfg.patience) {
                res.stopped_early = true;
                break;
            }
        }
    }
    if (res.val_curve.empty()) validate(res.steps_run);
    for (const auto& vp : res.val_curve)
        best = std::max(best, vp.overall_accuracy);
    res.best_val_accuracy = best;
    return res;
}

// ---- serialization ----

namespace {

nlohmann::json spec_to_json(const NetworkSpec& s) {
    return {{"family", family_to_string(s.family)},
            {"dimensionality", s.dimensionality},
            {"depth", s.depth},
            {"base_width", s.base_width},
            {"growth", s.growth},
            {"in_channels", s.in_channels},
            {"n_phases", s.n_phases}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec s;
    s.family = family_from_string(j.at("family").get<std::string>());
    s.dimensionality = j.at("dimensionality").get<int>();
    s.depth = j.at("depth").get<int>();
    s.base_width = j.at("base_width").get<int>();
    s.growth = j.value("growth", 2.0);
    s.in_channels = j.value("in_channels", 1);
    s.n_phases = j.at("n_phases").get<int>();
    s.validate();
    return s;
}

} // namespace

NetworkSpec spec_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open network spec: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("network spec " + path + ": " + e.what());
    }
    return spec_from_json(j);
}

std::string graph_summary_json(const BlockGraph& graph) {
    nlohmann::json j;
    j["spec"] = spec_to_json(graph.spec);
    j["parameter_count"] = count_params(graph);
    j["concat_edges"] = graph.concat_edges();
    j["add_edges"] = graph.add_edges();
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : graph.nodes) {
        nlohmann::json nj;
        nj["kind"] = block_kind_name(n.kind);
        nj["inputs"] = n.inputs;
        if (n.kind == BlockKind::Conv || n.kind == BlockKind::TConv) {
            nj["in_channels"] = n.in_channels;
            nj["out_channels"] = n.out_channels;
            nj["kernel"] = n.kernel;
            nj["params"] = n.param_count_formula();
        } else if (n.kind == BlockKind::BatchNorm) {
            nj["channels"] = n.out_channels;
            nj["params"] = n.param_count_formula();
        }
        nodes.push_back(nj);
    }
    j["nodes"] = nodes;
    return j.dump(2);
}

void save_model(const BlockGraph& graph, const std::string& path) {
    if (!graph.allocated) throw ValidationError("save_model: graph not allocated");
    std::ofstream bin(path, std::ios::binary);
    if (!bin) throw IoError("cannot write model file: " + path);
    std::int64_t offset = 0;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& n : graph.nodes) {
        auto dump = [&](const Tensor& t, const char* name) {
            if (t.v.empty()) return;
            bin.write(reinterpret_cast<const char*>(t.v.data()),
                      static_cast<std::streamsize>(t.v.size() * sizeof(double)));
            tensors.push_back({{"name", name},
                               {"offset_doubles", offset},
                               {"count", t.size()},
                               {"shape", t.shape()}});
            offset += t.size();
        };
        dump(n.weight, "weight");
        dump(n.bias, "bias");
        dump(n.gamma, "gamma");
        dump(n.beta, "beta");
        dump(n.run_mean, "run_mean");
        dump(n.run_var, "run_var");
    }
    if (!bin) throw IoError("short write on model file: " + path);
    bin.close();

    nlohmann::json j;
    j["format"] = "rockseg-model-v1";
    j["spec"] = spec_to_json(graph.spec);
    j["total_doubles"] = offset;
    j["tensors"] = tensors;
    std::ofstream meta(path + ".json");
    if (!meta) throw IoError("cannot write model manifest: " + path + ".json");
    meta << j.dump(2) << "\n";
}

BlockGraph load_model(const std::string& path) {
    std::ifstream meta(path + ".json");
    if (!meta) throw IoError("cannot open model manifest: " + path + ".json");
    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("model manifest: " + std::string(e.what()));
    }
    if (j.value("format", "") != "rockseg-model-v1")
        throw ValidationError("model manifest: unknown format");
    BlockGraph g = build(spec_from_json(j.at("spec")));
    allocate(g, 0);

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw IoError("cannot open model file: " + path);
    for (auto& n : g.nodes) {
        auto slurp = [&](Tensor& t) {
            if (t.v.empty()) return;
            bin.read(reinterpret_cast<char*>(t.v.data()),
                     static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        };
        slurp(n.weight);
        slurp(n.bias);
        slurp(n.gamma);
        slurp(n.beta);
        slurp(n.run_mean);
        slurp(n.run_var);
    }
    if (!bin) throw IoError("model file truncated: " + path);
    return g;
}

} // namespace rockseg::nn
