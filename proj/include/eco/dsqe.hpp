#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eco/backends.hpp"
#include "eco/cca.hpp"
#include "eco/domain_context.hpp"

namespace eco {

using Vec = std::vector<double>;

double cosine_sim(const Vec& a, const Vec& b);  // throws on zero vectors

struct DsqeConfig {
    double alpha = 0.5;         // diversity weight
    double beta = 0.01;         // regularization weight
    double temperature = 0.1;   // softmax temperature
    double margin = 0.5;        // diversity hinge margin γ
    double learning_rate = 1e-3;
    int epochs = 50;
    int batch_size = 32;
    int layers = 2;
    double dropout = 0.1;
    std::uint64_t seed = 0;
    std::size_t dim = 0;        // 0 -> embedder dimension

    json to_json() const;
    static DsqeConfig from_json(const json& j);
};

struct LayerParams {
    Vec weights;  // d*d, row-major
    Vec bias;     // d
};

// Trainable state: projection layers plus prototype vectors.
struct DsqeParams {
    std::size_t dim = 0;
    std::vector<LayerParams> layers;
    std::vector<Vec> prototypes;
};

// Per-sample, per-layer multiplicative dropout factors (0 or 1/(1-p)).
struct DropoutMasks {
    std::vector<std::vector<Vec>> factors;  // [sample][layer] -> d

    static DropoutMasks none(std::size_t samples, std::size_t layers, std::size_t dim);
    static DropoutMasks draw(std::mt19937_64& rng, std::size_t samples, std::size_t layers,
                             std::size_t dim, double rate);
};

// Inference-mode projection (no dropout): each layer applies ReLU(Wx + b).
Vec project(const DsqeParams& params, const Vec& input);

struct DsqeLoss {
    double total = 0.0;
    double contrast = 0.0;
    double diversity = 0.0;
    double reg = 0.0;
};

struct DsqeGradients {
    std::vector<LayerParams> layers;  // same shapes as params
    std::vector<Vec> prototypes;
};

// Batch objective: contrast (summed over the batch) + alpha * diversity
// + beta * reg (batch mean of squared projection norms). When `grads` is
// non-null, analytic gradients for every parameter are accumulated into it.
DsqeLoss dsqe_loss(const DsqeParams& params, const std::vector<Vec>& embeddings,
                   const std::vector<std::size_t>& proto_index, const DsqeConfig& config,
                   const DropoutMasks& masks, DsqeGradients* grads);

// Standalone loss terms (the batch objective above composes these).
double contrastive_loss(const std::vector<Vec>& projected,
                        const std::vector<std::size_t>& proto_index,
                        const std::vector<Vec>& prototypes, double temperature);
double diversity_loss(const std::vector<Vec>& prototypes, double margin);
double reg_loss(const std::vector<Vec>& projected);

struct EncoderModel {
    std::string build_id;
    std::string embedder_id;
    std::size_t dim = 0;
    DsqeParams params;
    std::vector<std::vector<ComponentValue>> component_sets;  // prototype index -> set
    DsqeConfig config;
    std::vector<double> loss_history;  // per-epoch totals

    json to_json() const;
    static EncoderModel from_json(const json& j);
};

// Trains the projection network and prototypes with mini-batch gradient
// descent; deterministic per config.seed. Prototypes are initialized to the
// normalized mean projected embedding of each component set and re-normalized
// after every step.
EncoderModel train(const std::vector<TrainingQuery>& train_queries,
                   const CriticalComponentMap& phi, Embedder& embedder,
                   const DsqeConfig& config, const WarnSink& warn = nullptr);

struct PrototypeAssignment {
    std::size_t index = 0;
    std::vector<ComponentValue> components;
    double similarity = 0.0;
    bool degenerate = false;  // zero-norm projection; empty component set
};

PrototypeAssignment assign_prototype(const EncoderModel& model, const std::string& query_text,
                                     Embedder& embedder);
PrototypeAssignment assign_prototype_embedded(const EncoderModel& model, const Vec& embedding);

}  // namespace eco
