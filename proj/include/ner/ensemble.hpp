#pragma once

#include <cstddef>
#include <vector>

#include "ner/matrix.hpp"
#include "ner/params.hpp"
#include "ner/rng.hpp"

namespace ner {

// K per-model representations of one sentence, each L x d, in model order.
struct StackedOutputs {
    std::vector<Matrix> reps;

    std::size_t models() const { return reps.size(); }
    std::size_t length() const { return reps.empty() ? 0 : reps[0].rows(); }
    std::size_t dim() const { return reps.empty() ? 0 : reps[0].cols(); }
};

StackedOutputs stack_outputs(std::vector<Matrix> outputs);

// Per-position per-model scalar mixing weights; each column (one position)
// is a point on the probability simplex.
struct EnsembleWeights {
    Matrix weights;  // K x L
};

// Attention that scores each model's representation at each position:
// s_i^k = <query, project_k(r_i^k)> / (temperature * sqrt(attn_dim)),
// softmaxed over models per position.
struct FusionLayer {
    std::vector<Matrix> projections;  // K entries, d x attn_dim
    std::vector<double> query;        // attn_dim
    double temperature = 1.0;

    std::size_t models() const { return projections.size(); }
    std::size_t attn_dim() const { return query.size(); }

    static FusionLayer create(std::size_t models, std::size_t dim, std::size_t attn_dim, Rng& rng);
};

EnsembleWeights attend(const FusionLayer& layer, const StackedOutputs& stacked);

// Row i = sum_k weights(k, i) * reps[k] row i. Rejects weights off the
// simplex by more than 1e-6.
Matrix fuse(const StackedOutputs& stacked, const EnsembleWeights& weights);

struct FusionCache {
    StackedOutputs stacked;
    std::vector<Matrix> projected;  // K entries, L x attn_dim
    EnsembleWeights weights;
};

// fuse(stacked, attend(layer, stacked)) with the state fusion_backward needs.
Matrix fuse_forward(const FusionLayer& layer, const StackedOutputs& stacked,
                    FusionCache* cache = nullptr);

struct FusionGradients {
    std::vector<Matrix> projections;
    std::vector<double> query;
    std::vector<Matrix> inputs;  // d(loss)/d(r^k), K entries L x d
};

FusionGradients fusion_backward(const FusionLayer& layer, const Matrix& upstream,
                                const FusionCache& cache);

// The fusion side of the model: one linear adapter per encoder mapping its
// native hidden size onto the shared ensemble dim, plus the fusion layer.
struct EnsembleModel {
    std::vector<Matrix> adapters;  // K entries, native_dim x common_dim, no bias
    FusionLayer fusion;

    std::size_t models() const { return adapters.size(); }
    std::size_t common_dim() const { return adapters.empty() ? 0 : adapters[0].cols(); }

    static EnsembleModel create(const std::vector<std::size_t>& native_dims,
                                std::size_t common_dim, std::size_t attn_dim, Rng& rng);
};

// reps[k] = native_outputs[k] * adapters[k].
StackedOutputs apply_adapters(const EnsembleModel& model,
                              const std::vector<Matrix>& native_outputs);

std::vector<ParamRef> param_refs(FusionLayer& layer, const std::string& prefix);
std::vector<ParamRef> param_refs(EnsembleModel& model, const std::string& prefix);

}  // namespace ner
