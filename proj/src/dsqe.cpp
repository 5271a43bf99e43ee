#include "eco/dsqe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace eco {

namespace {

constexpr double kNormEps = 1e-12;

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

void normalize_inplace(Vec& v) {
    double n = norm(v);
    if (n > kNormEps)
        for (double& x : v) x /= n;
}

}  // namespace

double cosine_sim(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw Error("cosine_sim: dimension mismatch");
    double na = norm(a), nb = norm(b);
    if (na <= kNormEps || nb <= kNormEps) throw Error("cosine_sim: zero vector");
    return dot(a, b) / (na * nb);
}

json DsqeConfig::to_json() const {
    return json{{"alpha", alpha},
                {"beta", beta},
                {"temperature", temperature},
                {"margin", margin},
                {"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"layers", layers},
                {"dropout", dropout},
                {"seed", seed},
                {"dim", dim}};
}

DsqeConfig DsqeConfig::from_json(const json& j) {
    DsqeConfig c;
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.temperature = j.value("temperature", c.temperature);
    c.margin = j.value("margin", c.margin);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.layers = j.value("layers", c.layers);
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
    c.dim = j.value("dim", c.dim);
    if (c.temperature <= 0) throw Error("temperature must be positive");
    if (c.margin < 0 || c.margin > 1) throw Error("margin must be in [0,1]");
    if (c.alpha < 0 || c.beta < 0) throw Error("alpha and beta must be non-negative");
    return c;
}

DropoutMasks DropoutMasks::none(std::size_t samples, std::size_t layers, std::size_t dim) {
    DropoutMasks m;
    m.factors.assign(samples, std::vector<Vec>(layers, Vec(dim, 1.0)));
    return m;
}

DropoutMasks DropoutMasks::draw(std::mt19937_64& rng, std::size_t samples, std::size_t layers,
                                std::size_t dim, double rate) {
    if (rate <= 0.0) return none(samples, layers, dim);
    DropoutMasks m;
    double keep = 1.0 - rate;
    double scale = 1.0 / keep;
    m.factors.assign(samples, std::vector<Vec>(layers, Vec(dim, 0.0)));
    for (auto& sample : m.factors)
        for (auto& layer : sample)
            for (double& f : layer) f = uniform_unit(rng) < keep ? scale : 0.0;
    return m;
}

namespace {

struct ForwardTrace {
    std::vector<Vec> inputs;       // u_i = mask ⊙ x_{i-1}, per layer
    std::vector<Vec> activations;  // a_i = W u + b, per layer
    Vec output;                    // x_L
};

ForwardTrace forward_traced(const DsqeParams& params, const Vec& input,
                            const std::vector<Vec>& masks) {
    ForwardTrace trace;
    Vec x = input;
    std::size_t d = params.dim;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Vec u(d);
        for (std::size_t i = 0; i < d; ++i) u[i] = x[i] * masks[l][i];
        Vec a(d, 0.0);
        const Vec& W = params.layers[l].weights;
        for (std::size_t row = 0; row < d; ++row) {
            double s = params.layers[l].bias[row];
            const double* wrow = &W[row * d];
            for (std::size_t col = 0; col < d; ++col) s += wrow[col] * u[col];
            a[row] = s;
        }
        Vec out(d);
        for (std::size_t i = 0; i < d; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
        trace.inputs.push_back(std::move(u));
        trace.activations.push_back(std::move(a));
        x = std::move(out);
    }
    trace.output = std::move(x);
    return trace;
}

}  // namespace

Vec project(const DsqeParams& params, const Vec& input) {
    std::vector<Vec> identity(params.layers.size(), Vec(params.dim, 1.0));
    return forward_traced(params, input, identity).output;
}

double contrastive_loss(const std::vector<Vec>& projected,
                        const std::vector<std::size_t>& proto_index,
                        const std::vector<Vec>& prototypes, double temperature) {
    if (prototypes.empty()) throw Error("contrastive loss requires at least one prototype");
    double loss = 0.0;
    for (std::size_t q = 0; q < projected.size(); ++q) {
        const Vec& z = projected[q];
        double zn = norm(z);
        if (zn <= kNormEps) {
            loss += std::log(static_cast<double>(prototypes.size()));
            continue;
        }
        std::vector<double> sims(prototypes.size());
        for (std::size_t k = 0; k < prototypes.size(); ++k) {
            double pn = norm(prototypes[k]);
            sims[k] = pn <= kNormEps ? 0.0 : dot(z, prototypes[k]) / (zn * pn);
        }
        double max_s = *std::max_element(sims.begin(), sims.end()) / temperature;
        double denom = 0.0;
        for (double s : sims) denom += std::exp(s / temperature - max_s);
        loss -= sims[proto_index[q]] / temperature - max_s - std::log(denom);
    }
    return loss;
}

double diversity_loss(const std::vector<Vec>& prototypes, double margin) {
    std::size_t k = prototypes.size();
    if (k <= 1) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            double ni = norm(prototypes[i]), nj = norm(prototypes[j]);
            double s = (ni <= kNormEps || nj <= kNormEps)
                           ? 0.0
                           : dot(prototypes[i], prototypes[j]) / (ni * nj);
            sum += std::max(0.0, s - margin);
        }
    }
    return sum / (static_cast<double>(k) * static_cast<double>(k - 1));
}

double reg_loss(const std::vector<Vec>& projected) {
    if (projected.empty()) return 0.0;
    double sum = 0.0;
    for (const Vec& z : projected) sum += dot(z, z);
    return sum / static_cast<double>(projected.size());
}

DsqeLoss dsqe_loss(const DsqeParams& params, const std::vector<Vec>& embeddings,
                   const std::vector<std::size_t>& proto_index, const DsqeConfig& config,
                   const DropoutMasks& masks, DsqeGradients* grads) {
    std::size_t d = params.dim;
    std::size_t n = embeddings.size();
    std::size_t K = params.prototypes.size();
    if (K == 0) throw Error("dsqe loss requires at least one prototype");

    if (grads) {
        grads->layers.assign(params.layers.size(), LayerParams{Vec(d * d, 0.0), Vec(d, 0.0)});
        grads->prototypes.assign(K, Vec(d, 0.0));
    }

    std::vector<double> proto_norms(K);
    for (std::size_t k = 0; k < K; ++k) proto_norms[k] = norm(params.prototypes[k]);

    DsqeLoss loss;
    std::vector<Vec> projected(n);

    for (std::size_t q = 0; q < n; ++q) {
        ForwardTrace trace = forward_traced(params, embeddings[q], masks.factors[q]);
        const Vec& z = trace.output;
        projected[q] = z;
        double zn = norm(z);

        Vec dz(d, 0.0);

        // Regularization: batch mean of ||z||^2.
        loss.reg += dot(z, z) / static_cast<double>(n);
        if (grads)
            for (std::size_t i = 0; i < d; ++i)
                dz[i] += config.beta * 2.0 * z[i] / static_cast<double>(n);

        // Contrastive term.
        if (zn <= kNormEps) {
            loss.contrast += std::log(static_cast<double>(K));
        } else {
            std::vector<double> sims(K);
            for (std::size_t k = 0; k < K; ++k)
                sims[k] = proto_norms[k] <= kNormEps
                              ? 0.0
                              : dot(z, params.prototypes[k]) / (zn * proto_norms[k]);
            double max_s = *std::max_element(sims.begin(), sims.end()) / config.temperature;
            std::vector<double> expv(K);
            double denom = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                expv[k] = std::exp(sims[k] / config.temperature - max_s);
                denom += expv[k];
            }
            std::size_t y = proto_index[q];
            loss.contrast -= sims[y] / config.temperature - max_s - std::log(denom);

            if (grads) {
                for (std::size_t k = 0; k < K; ++k) {
                    if (proto_norms[k] <= kNormEps) continue;
                    double ds = (expv[k] / denom - (k == y ? 1.0 : 0.0)) / config.temperature;
                    // d sim / dz and d sim / dv_k of the cosine.
                    const Vec& v = params.prototypes[k];
                    double inv_zv = 1.0 / (zn * proto_norms[k]);
                    double inv_zz = sims[k] / (zn * zn);
                    double inv_vv = sims[k] / (proto_norms[k] * proto_norms[k]);
                    for (std::size_t i = 0; i < d; ++i) {
                        dz[i] += ds * (v[i] * inv_zv - z[i] * inv_zz);
                        grads->prototypes[k][i] += ds * (z[i] * inv_zv - v[i] * inv_vv);
                    }
                }
            }
        }

        // Backprop through the layers.
        if (grads) {
            Vec g = dz;
            for (std::size_t l = params.layers.size(); l-- > 0;) {
                const Vec& a = trace.activations[l];
                const Vec& u = trace.inputs[l];
                Vec da(d);
                for (std::size_t i = 0; i < d; ++i) da[i] = a[i] > 0.0 ? g[i] : 0.0;
                auto& gl = grads->layers[l];
                for (std::size_t row = 0; row < d; ++row) {
                    if (da[row] == 0.0) continue;
                    double* grow = &gl.weights[row * d];
                    for (std::size_t col = 0; col < d; ++col) grow[col] += da[row] * u[col];
                    gl.bias[row] += da[row];
                }
                if (l > 0) {
                    const Vec& W = params.layers[l].weights;
                    Vec gprev(d, 0.0);
                    for (std::size_t row = 0; row < d; ++row) {
                        if (da[row] == 0.0) continue;
                        const double* wrow = &W[row * d];
                        for (std::size_t col = 0; col < d; ++col)
                            gprev[col] += wrow[col] * da[row];
                    }
                    for (std::size_t i = 0; i < d; ++i)
                        g[i] = gprev[i] * masks.factors[q][l][i];
                }
            }
        }
    }

    // Diversity term and its prototype gradients.
    if (K > 1) {
        double pair_count = static_cast<double>(K) * static_cast<double>(K - 1);
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) {
                if (i == j) continue;
                if (proto_norms[i] <= kNormEps || proto_norms[j] <= kNormEps) continue;
                double s =
                    dot(params.prototypes[i], params.prototypes[j]) / (proto_norms[i] * proto_norms[j]);
                if (s - config.margin <= 0.0) continue;
                loss.diversity += (s - config.margin) / pair_count;
                if (grads) {
                    const Vec& vi = params.prototypes[i];
                    const Vec& vj = params.prototypes[j];
                    double inv_ij = 1.0 / (proto_norms[i] * proto_norms[j]);
                    double inv_ii = s / (proto_norms[i] * proto_norms[i]);
                    double inv_jj = s / (proto_norms[j] * proto_norms[j]);
                    double w = config.alpha / pair_count;
                    for (std::size_t dcomp = 0; dcomp < d; ++dcomp) {
                        grads->prototypes[i][dcomp] +=
                            w * (vj[dcomp] * inv_ij - vi[dcomp] * inv_ii);
                        grads->prototypes[j][dcomp] +=
                            w * (vi[dcomp] * inv_ij - vj[dcomp] * inv_jj);
                    }
                }
            }
        }
    }

    loss.total = loss.contrast + config.alpha * loss.diversity + config.beta * loss.reg;
    return loss;
}

// ---------------------------------------------------------------------------
// Training

json EncoderModel::to_json() const {
    json layers_j = json::array();
    for (const auto& l : params.layers)
        layers_j.push_back(json{{"weights", l.weights}, {"bias", l.bias}});
    json protos_j = json::array();
    for (const auto& v : params.prototypes) protos_j.push_back(v);
    json sets_j = json::array();
    for (const auto& set : component_sets) {
        json arr = json::array();
        for (const auto& c : set) arr.push_back(c.to_json());
        sets_j.push_back(std::move(arr));
    }
    return json{{"build_id", build_id},
                {"embedder", json{{"id", embedder_id}, {"dim", dim}}},
                {"config", config.to_json()},
                {"dim", params.dim},
                {"layers", std::move(layers_j)},
                {"prototypes", std::move(protos_j)},
                {"component_sets", std::move(sets_j)},
                {"loss_history", loss_history}};
}

EncoderModel EncoderModel::from_json(const json& j) {
    EncoderModel m;
    m.build_id = j.value("build_id", "");
    m.embedder_id = j.at("embedder").at("id").get<std::string>();
    m.dim = j.at("embedder").at("dim").get<std::size_t>();
    m.config = DsqeConfig::from_json(j.at("config"));
    m.params.dim = j.at("dim").get<std::size_t>();
    for (const auto& lj : j.at("layers"))
        m.params.layers.push_back(LayerParams{lj.at("weights").get<Vec>(),
                                              lj.at("bias").get<Vec>()});
    for (const auto& pj : j.at("prototypes")) m.params.prototypes.push_back(pj.get<Vec>());
    for (const auto& sj : j.at("component_sets")) {
        std::vector<ComponentValue> set;
        for (const auto& cj : sj) set.push_back(ComponentValue::from_json(cj));
        m.component_sets.push_back(std::move(set));
    }
    m.loss_history = j.value("loss_history", std::vector<double>{});
    return m;
}

namespace {

std::string component_set_key(const std::vector<ComponentValue>& set) {
    std::vector<std::string> keys;
    keys.reserve(set.size());
    for (const auto& c : set) keys.push_back(c.key());
    std::sort(keys.begin(), keys.end());
    std::string out;
    for (const auto& k : keys) {
        out += k;
        out += ';';
    }
    return out;
}

}  // namespace

EncoderModel train(const std::vector<TrainingQuery>& train_queries,
                   const CriticalComponentMap& phi, Embedder& embedder,
                   const DsqeConfig& config, const WarnSink& warn) {
    if (train_queries.empty()) throw Error("dsqe training requires at least one query");

    // Enumerate distinct critical component sets; K = their count.
    std::vector<const TrainingQuery*> usable;
    for (const auto& q : train_queries) {
        if (!phi.map.count(q.id))
            throw Error("query '" + q.id + "' missing from the critical component map");
        usable.push_back(&q);
    }
    std::map<std::string, std::size_t> set_index;
    std::vector<std::vector<ComponentValue>> component_sets;
    std::vector<std::size_t> assignment(usable.size());
    for (std::size_t i = 0; i < usable.size(); ++i) {
        const auto& set = phi.map.at(usable[i]->id);
        std::string key = component_set_key(set);
        auto it = set_index.find(key);
        if (it == set_index.end()) {
            it = set_index.emplace(key, component_sets.size()).first;
            component_sets.push_back(set);
        }
        assignment[i] = it->second;
    }
    std::size_t K = component_sets.size();
    if (K == 0) throw Error("no component sets to learn prototypes for");
    if (K > 64 && warn)
        warn("training produced " + std::to_string(K) +
             " distinct component sets; prototype table is large");

    std::vector<Vec> embeddings;
    embeddings.reserve(usable.size());
    for (const auto* q : usable) embeddings.push_back(embedder.embed(q->text));
    std::size_t d = config.dim > 0 ? config.dim : embedder.dim();
    if (d != embedder.dim())
        throw Error("configured dim must match the embedder dimension");

    DsqeParams params;
    params.dim = d;
    auto rng = seeded_rng(config.seed, "dsqe-init");
    double bound = std::sqrt(6.0 / (2.0 * static_cast<double>(d)));
    for (int l = 0; l < config.layers; ++l) {
        LayerParams layer{Vec(d * d), Vec(d, 0.0)};
        for (double& w : layer.weights) w = uniform_in(rng, -bound, bound);
        params.layers.push_back(std::move(layer));
    }

    // Prototype init: normalized mean projected embedding per component set.
    params.prototypes.assign(K, Vec(d, 0.0));
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < usable.size(); ++i) {
        Vec z = project(params, embeddings[i]);
        auto& proto = params.prototypes[assignment[i]];
        for (std::size_t j = 0; j < d; ++j) proto[j] += z[j];
        ++counts[assignment[i]];
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (counts[k] > 0)
            for (double& x : params.prototypes[k]) x /= static_cast<double>(counts[k]);
        if (norm(params.prototypes[k]) <= kNormEps) {
            auto prng = seeded_rng(config.seed, "proto-reinit-" + std::to_string(k));
            for (double& x : params.prototypes[k]) x = uniform_in(prng, -1.0, 1.0);
        }
        normalize_inplace(params.prototypes[k]);
    }

    std::vector<double> loss_history;
    std::size_t n = usable.size();
    std::size_t batch_size = std::max(1, config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto erng = seeded_rng(config.seed, "epoch-" + std::to_string(epoch));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), erng);

        double epoch_loss = 0.0;
        for (std::size_t base = 0; base < n; base += batch_size) {
            std::size_t end = std::min(n, base + batch_size);
            std::vector<Vec> batch;
            std::vector<std::size_t> batch_assign;
            for (std::size_t i = base; i < end; ++i) {
                batch.push_back(embeddings[order[i]]);
                batch_assign.push_back(assignment[order[i]]);
            }
            DropoutMasks masks = DropoutMasks::draw(erng, batch.size(),
                                                    params.layers.size(), d, config.dropout);
            DsqeGradients grads;
            DsqeLoss loss = dsqe_loss(params, batch, batch_assign, config, masks, &grads);
            epoch_loss += loss.total;

            double lr = config.learning_rate;
            for (std::size_t l = 0; l < params.layers.size(); ++l) {
                auto& layer = params.layers[l];
                const auto& g = grads.layers[l];
                for (std::size_t i = 0; i < layer.weights.size(); ++i)
                    layer.weights[i] -= lr * g.weights[i];
                for (std::size_t i = 0; i < layer.bias.size(); ++i)
                    layer.bias[i] -= lr * g.bias[i];
            }
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t i = 0; i < d; ++i)
                    params.prototypes[k][i] -= lr * grads.prototypes[k][i];
                normalize_inplace(params.prototypes[k]);
            }
        }
        loss_history.push_back(epoch_loss);
    }

    EncoderModel model;
    model.embedder_id = embedder.id();
    model.dim = embedder.dim();
    model.params = std::move(params);
    model.component_sets = std::move(component_sets);
    model.config = config;
    model.loss_history = std::move(loss_history);
    return model;
}

PrototypeAssignment assign_prototype_embedded(const EncoderModel& model, const Vec& embedding) {
    Vec z = project(model.params, embedding);
    PrototypeAssignment out;
    if (norm(z) <= kNormEps) {
        out.degenerate = true;
        return out;
    }
    double best = -2.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < model.params.prototypes.size(); ++k) {
        if (norm(model.params.prototypes[k]) <= kNormEps) continue;
        double s = cosine_sim(z, model.params.prototypes[k]);
        if (s > best) {
            best = s;
            best_k = k;
        }
    }
    out.index = best_k;
    out.similarity = best;
    out.components = model.component_sets.at(best_k);
    return out;
}

PrototypeAssignment assign_prototype(const EncoderModel& model, const std::string& query_text,
                                     Embedder& embedder) {
    return assign_prototype_embedded(model, embedder.embed(query_text));
}

}  // namespace eco
