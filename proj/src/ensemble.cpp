#include "ner/ensemble.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ner/kernels.hpp"
#include "ner/numerics.hpp"

namespace ner {

namespace {
constexpr double kSimplexTolerance = 1e-6;
}

StackedOutputs stack_outputs(std::vector<Matrix> outputs) {
    if (outputs.empty()) throw std::invalid_argument("stack_outputs: no model outputs");
    for (std::size_t k = 1; k < outputs.size(); ++k) {
        if (!outputs[k].same_shape(outputs[0]))
            throw std::invalid_argument("stack_outputs: model " + std::to_string(k) +
                                        " output shape differs from model 0");
    }
    if (outputs[0].rows() == 0) throw std::invalid_argument("stack_outputs: empty sentence");
    return StackedOutputs{std::move(outputs)};
}

FusionLayer FusionLayer::create(std::size_t models, std::size_t dim, std::size_t attn_dim,
                                Rng& rng) {
    if (models == 0 || dim == 0 || attn_dim == 0)
        throw std::invalid_argument("FusionLayer: dimensions must be positive");
    FusionLayer layer;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    layer.projections.reserve(models);
    for (std::size_t k = 0; k < models; ++k)
        layer.projections.push_back(Matrix::randn(dim, attn_dim, rng, scale));
    layer.query.resize(attn_dim);
    for (double& v : layer.query) v = rng.normal();
    layer.temperature = 1.0;
    return layer;
}

namespace {

void check_compatible(const FusionLayer& layer, const StackedOutputs& stacked) {
    if (layer.models() != stacked.models())
        throw std::invalid_argument("fusion: layer has " + std::to_string(layer.models()) +
                                    " projections but stack has " +
                                    std::to_string(stacked.models()) + " models");
    if (layer.projections[0].rows() != stacked.dim())
        throw std::invalid_argument("fusion: projection input dim " +
                                    std::to_string(layer.projections[0].rows()) +
                                    " does not match representation dim " +
                                    std::to_string(stacked.dim()));
    if (!(layer.temperature > 0.0))
        throw std::invalid_argument("fusion: temperature must be positive");
}

// Scores then per-position softmax over models, optionally keeping the
// projected representations for the backward pass.
EnsembleWeights attend_impl(const FusionLayer& layer, const StackedOutputs& stacked,
                            std::vector<Matrix>* projected_out) {
    check_compatible(layer, stacked);
    const std::size_t K = stacked.models(), L = stacked.length(), da = layer.attn_dim();
    const double inv_scale = 1.0 / (layer.temperature * std::sqrt(static_cast<double>(da)));

    Matrix scores(K, L);
    std::vector<Matrix> projected(K);
    for (std::size_t k = 0; k < K; ++k) {
        projected[k] = matmul(stacked.reps[k], layer.projections[k]);  // L x da
        for (std::size_t i = 0; i < L; ++i)
            scores(k, i) = kernels::dot(layer.query.data(), projected[k].row(i), da) * inv_scale;
    }

    EnsembleWeights w;
    w.weights = Matrix(K, L);
    std::vector<double> column(K);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t k = 0; k < K; ++k) column[k] = scores(k, i);
        softmax_inplace(column.data(), K);
        for (std::size_t k = 0; k < K; ++k) w.weights(k, i) = column[k];
    }
    if (projected_out) *projected_out = std::move(projected);
    return w;
}

}  // namespace

EnsembleWeights attend(const FusionLayer& layer, const StackedOutputs& stacked) {
    return attend_impl(layer, stacked, nullptr);
}

Matrix fuse(const StackedOutputs& stacked, const EnsembleWeights& weights) {
    const std::size_t K = stacked.models(), L = stacked.length(), d = stacked.dim();
    if (weights.weights.rows() != K || weights.weights.cols() != L)
        throw std::invalid_argument("fuse: weight shape does not match stack");
    for (std::size_t i = 0; i < L; ++i) {
        double colsum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double a = weights.weights(k, i);
            if (a < -kSimplexTolerance)
                throw std::invalid_argument("fuse: negative weight at position " +
                                            std::to_string(i));
            colsum += a;
        }
        if (std::abs(colsum - 1.0) > kSimplexTolerance)
            throw std::invalid_argument("fuse: weights at position " + std::to_string(i) +
                                        " sum to " + std::to_string(colsum));
    }

    Matrix fused(L, d);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < L; ++i)
            kernels::axpy(weights.weights(k, i), stacked.reps[k].row(i), fused.row(i), d);
    return fused;
}

Matrix fuse_forward(const FusionLayer& layer, const StackedOutputs& stacked, FusionCache* cache) {
    std::vector<Matrix> projected;
    EnsembleWeights w = attend_impl(layer, stacked, cache ? &projected : nullptr);
    Matrix fused = fuse(stacked, w);
    if (cache) {
        cache->stacked = stacked;
        cache->projected = std::move(projected);
        cache->weights = std::move(w);
    }
    return fused;
}

FusionGradients fusion_backward(const FusionLayer& layer, const Matrix& upstream,
                                const FusionCache& cache) {
    const StackedOutputs& stacked = cache.stacked;
    check_compatible(layer, stacked);
    const std::size_t K = stacked.models(), L = stacked.length(), d = stacked.dim();
    const std::size_t da = layer.attn_dim();
    if (upstream.rows() != L || upstream.cols() != d)
        throw std::invalid_argument("fusion_backward: upstream gradient shape mismatch");
    if (cache.projected.size() != K || cache.weights.weights.rows() != K)
        throw std::invalid_argument("fusion_backward: cache does not match layer");

    FusionGradients g;
    g.projections.assign(K, Matrix(stacked.dim(), da));
    g.query.assign(da, 0.0);
    g.inputs.assign(K, Matrix(L, d));

    const double inv_scale = 1.0 / (layer.temperature * std::sqrt(static_cast<double>(da)));
    std::vector<double> d_score(K);
    std::vector<Matrix> d_projected(K, Matrix(L, da));

    for (std::size_t i = 0; i < L; ++i) {
        // fuse: R_i = sum_k a_i^k r_i^k
        double inner = 0.0;  // <d_a, a> for the softmax backward
        for (std::size_t k = 0; k < K; ++k) {
            double a = cache.weights.weights(k, i);
            kernels::axpy(a, upstream.row(i), g.inputs[k].row(i), d);
            d_score[k] = kernels::dot(upstream.row(i), stacked.reps[k].row(i), d);  // d(loss)/d(a_i^k)
            inner += d_score[k] * a;
        }
        for (std::size_t k = 0; k < K; ++k) {
            double a = cache.weights.weights(k, i);
            double ds = a * (d_score[k] - inner) * inv_scale;  // through softmax and scaling
            kernels::axpy(ds, cache.projected[k].row(i), g.query.data(), da);
            kernels::axpy(ds, layer.query.data(), d_projected[k].row(i), da);
        }
    }

    for (std::size_t k = 0; k < K; ++k) {
        g.projections[k].add_scaled(matmul_ta(stacked.reps[k], d_projected[k]), 1.0);
        g.inputs[k].add_scaled(matmul_tb(d_projected[k], layer.projections[k]), 1.0);
    }
    return g;
}

EnsembleModel EnsembleModel::create(const std::vector<std::size_t>& native_dims,
                                    std::size_t common_dim, std::size_t attn_dim, Rng& rng) {
    if (native_dims.empty()) throw std::invalid_argument("EnsembleModel: no encoders");
    EnsembleModel m;
    m.adapters.reserve(native_dims.size());
    for (std::size_t dim : native_dims) {
        if (dim == 0) throw std::invalid_argument("EnsembleModel: zero encoder dim");
        m.adapters.push_back(
            Matrix::randn(dim, common_dim, rng, 1.0 / std::sqrt(static_cast<double>(dim))));
    }
    m.fusion = FusionLayer::create(native_dims.size(), common_dim, attn_dim, rng);
    return m;
}

StackedOutputs apply_adapters(const EnsembleModel& model,
                              const std::vector<Matrix>& native_outputs) {
    if (native_outputs.size() != model.models())
        throw std::invalid_argument("apply_adapters: expected " + std::to_string(model.models()) +
                                    " encoder outputs, got " +
                                    std::to_string(native_outputs.size()));
    std::vector<Matrix> reps;
    reps.reserve(native_outputs.size());
    for (std::size_t k = 0; k < native_outputs.size(); ++k) {
        if (native_outputs[k].cols() != model.adapters[k].rows())
            throw std::invalid_argument("apply_adapters: encoder " + std::to_string(k) +
                                        " output dim does not match its adapter");
        reps.push_back(matmul(native_outputs[k], model.adapters[k]));
    }
    return stack_outputs(std::move(reps));
}

std::vector<ParamRef> param_refs(FusionLayer& layer, const std::string& prefix) {
    std::vector<ParamRef> refs;
    for (std::size_t k = 0; k < layer.projections.size(); ++k)
        refs.push_back(ref(prefix + "proj" + std::to_string(k), layer.projections[k]));
    refs.push_back(ref(prefix + "query", layer.query));
    return refs;
}

std::vector<ParamRef> param_refs(EnsembleModel& model, const std::string& prefix) {
    std::vector<ParamRef> refs;
    for (std::size_t k = 0; k < model.adapters.size(); ++k)
        refs.push_back(ref(prefix + "adapter" + std::to_string(k), model.adapters[k]));
    auto fusion_refs = param_refs(model.fusion, prefix + "fusion/");
    refs.insert(refs.end(), fusion_refs.begin(), fusion_refs.end());
    return refs;
}

}  // namespace ner
