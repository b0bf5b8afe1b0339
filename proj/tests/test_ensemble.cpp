#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "ner/ensemble.hpp"
#include "ner/numerics.hpp"
#include "ner/params.hpp"
#include "ner/rng.hpp"

using namespace ner;

namespace {

StackedOutputs random_stack(std::size_t K, std::size_t L, std::size_t d, Rng& rng) {
    std::vector<Matrix> reps;
    for (std::size_t k = 0; k < K; ++k) reps.push_back(Matrix::randn(L, d, rng));
    return stack_outputs(std::move(reps));
}

}  // namespace

TEST_SUITE("ensemble") {

TEST_CASE("stack rejects mismatched shapes naming the model") {
    std::vector<Matrix> ok;
    ok.push_back(Matrix(3, 2));
    ok.push_back(Matrix(3, 2));
    CHECK_NOTHROW((void)stack_outputs(std::move(ok)));

    std::vector<Matrix> bad;
    bad.push_back(Matrix(3, 2));
    bad.push_back(Matrix(4, 2));
    CHECK_THROWS_WITH_AS((void)stack_outputs(std::move(bad)), doctest::Contains("model 1"),
                         std::invalid_argument);
}

TEST_CASE("attention scores agree with a hand-rolled computation") {
    // K=3 models, L=2 positions, d=2, attn_dim=2, all values explicit.
    Rng rng(1);
    StackedOutputs stacked = random_stack(3, 2, 2, rng);
    FusionLayer layer = FusionLayer::create(3, 2, 2, rng);
    layer.temperature = 1.3;

    EnsembleWeights w = attend(layer, stacked);
    REQUIRE(w.weights.rows() == 3);
    REQUIRE(w.weights.cols() == 2);

    double scale = 1.0 / (layer.temperature * std::sqrt(2.0));
    for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> scores(3);
        for (std::size_t k = 0; k < 3; ++k) {
            double z0 = stacked.reps[k](i, 0) * layer.projections[k](0, 0) +
                        stacked.reps[k](i, 1) * layer.projections[k](1, 0);
            double z1 = stacked.reps[k](i, 0) * layer.projections[k](0, 1) +
                        stacked.reps[k](i, 1) * layer.projections[k](1, 1);
            scores[k] = (layer.query[0] * z0 + layer.query[1] * z1) * scale;
        }
        std::vector<double> p = softmax(scores);
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(w.weights(k, i) == doctest::Approx(p[k]).epsilon(1e-13));
    }

    Matrix fused = fuse(stacked, w);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double expect = 0.0;
            for (std::size_t k = 0; k < 3; ++k) expect += w.weights(k, i) * stacked.reps[k](i, j);
            CHECK(fused(i, j) == doctest::Approx(expect).epsilon(1e-13));
        }
}

TEST_CASE("weights live on the simplex and fusion stays in the convex hull") {
    Rng rng(71);
    for (int rep = 0; rep < 25; ++rep) {
        std::size_t K = 1 + rng.uniform_int(4), L = 1 + rng.uniform_int(5),
                    d = 1 + rng.uniform_int(6);
        StackedOutputs stacked = random_stack(K, L, d, rng);
        FusionLayer layer = FusionLayer::create(K, d, 3, rng);
        FusionCache cache;
        Matrix fused = fuse_forward(layer, stacked, &cache);

        for (std::size_t i = 0; i < L; ++i) {
            double col = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                double wk = cache.weights.weights(k, i);
                CHECK(wk >= 0.0);
                col += wk;
            }
            CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
            for (std::size_t j = 0; j < d; ++j) {
                double lo = 1e300, hi = -1e300;
                for (std::size_t k = 0; k < K; ++k) {
                    lo = std::min(lo, stacked.reps[k](i, j));
                    hi = std::max(hi, stacked.reps[k](i, j));
                }
                CHECK(fused(i, j) >= lo - 1e-12);
                CHECK(fused(i, j) <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("single-model fusion is the exact identity") {
    Rng rng(4);
    StackedOutputs stacked = random_stack(1, 4, 3, rng);
    FusionLayer layer = FusionLayer::create(1, 3, 2, rng);
    FusionCache cache;
    Matrix fused = fuse_forward(layer, stacked, &cache);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(cache.weights.weights(0, i) == 1.0);  // softmax of a singleton, bitwise
        for (std::size_t j = 0; j < 3; ++j) CHECK(fused(i, j) == stacked.reps[0](i, j));
    }
}

TEST_CASE("a dominant model takes all the weight") {
    Rng rng(8);
    StackedOutputs stacked = random_stack(3, 2, 2, rng);
    FusionLayer layer = FusionLayer::create(3, 2, 2, rng);
    // crank model 1's projection so its score dwarfs the others
    layer.query = {100.0, 100.0};
    for (std::size_t k = 0; k < 3; ++k) {
        layer.projections[k].fill(k == 1 ? 50.0 : -50.0);
    }
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < stacked.reps[k].size(); ++i)
            stacked.reps[k].data()[i] = std::abs(stacked.reps[k].data()[i]) + 0.1;

    FusionCache cache;
    Matrix fused = fuse_forward(layer, stacked, &cache);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(cache.weights.weights(1, i) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(fused(i, j) == doctest::Approx(stacked.reps[1](i, j)).epsilon(1e-9));
    }
}

TEST_CASE("relabeling the models permutes the weights with them") {
    Rng rng(15);
    StackedOutputs stacked = random_stack(3, 3, 2, rng);
    FusionLayer layer = FusionLayer::create(3, 2, 2, rng);

    FusionCache base_cache;
    Matrix base = fuse_forward(layer, stacked, &base_cache);

    std::vector<std::size_t> perm{2, 0, 1};
    StackedOutputs pstacked;
    FusionLayer player = layer;
    for (std::size_t k = 0; k < 3; ++k) {
        pstacked.reps.push_back(stacked.reps[perm[k]]);
        player.projections[k] = layer.projections[perm[k]];
    }
    FusionCache pcache;
    Matrix permuted = fuse_forward(player, pstacked, &pcache);

    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(pcache.weights.weights(k, i) ==
                  doctest::Approx(base_cache.weights.weights(perm[k], i)).epsilon(1e-13));
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(permuted(i, j) == doctest::Approx(base(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("fuse rejects weights off the simplex") {
    Rng rng(2);
    StackedOutputs stacked = random_stack(2, 2, 2, rng);
    EnsembleWeights w;
    w.weights = Matrix(2, 2, 0.5);
    CHECK_NOTHROW((void)fuse(stacked, w));

    w.weights(0, 1) = 0.6;  // column sums to 1.1
    CHECK_THROWS_AS((void)fuse(stacked, w), std::invalid_argument);

    w.weights(0, 1) = -0.1;
    w.weights(1, 1) = 1.1;  // sums to 1 but negative entry
    CHECK_THROWS_AS((void)fuse(stacked, w), std::invalid_argument);
}

TEST_CASE("fusion gradients match finite differences") {
    Rng rng(99);
    std::size_t K = 3, L = 3, d = 4, attn = 2;
    StackedOutputs stacked = random_stack(K, L, d, rng);
    FusionLayer layer = FusionLayer::create(K, d, attn, rng);
    Matrix upstream = Matrix::randn(L, d, rng);

    FusionCache cache;
    (void)fuse_forward(layer, stacked, &cache);
    FusionGradients grads = fusion_backward(layer, upstream, cache);

    auto loss_of = [&](const FusionLayer& lay, const StackedOutputs& st) {
        Matrix out = fuse_forward(lay, st);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * upstream.data()[i];
        return s;
    };

    SUBCASE("projections and query") {
        FusionLayer work = layer;
        std::vector<ParamRef> p_refs = param_refs(work, "f/");
        std::vector<double> point = flatten(p_refs);

        FusionLayer gl = layer;
        for (std::size_t k = 0; k < K; ++k) gl.projections[k] = grads.projections[k];
        gl.query = grads.query;
        std::vector<double> grad = flatten(param_refs(gl, "f/"));

        auto f = [&](const std::vector<double>& x) {
            unflatten(x, p_refs);
            return loss_of(work, stacked);
        };
        CHECK(finite_diff_check(f, grad, point, 1e-6) < 1e-7);
    }

    SUBCASE("inputs") {
        for (std::size_t k = 0; k < K; ++k) {
            StackedOutputs work = stacked;
            std::vector<double> point(work.reps[k].data(),
                                      work.reps[k].data() + work.reps[k].size());
            std::vector<double> grad(grads.inputs[k].data(),
                                     grads.inputs[k].data() + grads.inputs[k].size());
            auto f = [&](const std::vector<double>& x) {
                std::copy(x.begin(), x.end(), work.reps[k].data());
                return loss_of(layer, work);
            };
            CHECK(finite_diff_check(f, grad, point, 1e-6) < 1e-7);
        }
    }
}

TEST_CASE("temperature sharpens or flattens the mix") {
    Rng rng(55);
    StackedOutputs stacked = random_stack(3, 1, 3, rng);
    FusionLayer layer = FusionLayer::create(3, 3, 2, rng);

    layer.temperature = 0.05;
    EnsembleWeights sharp = attend(layer, stacked);
    layer.temperature = 50.0;
    EnsembleWeights flat = attend(layer, stacked);

    auto entropy = [](const Matrix& w) {
        double h = 0.0;
        for (std::size_t k = 0; k < w.rows(); ++k) {
            double p = w(k, 0);
            if (p > 0.0) h -= p * std::log(p);
        }
        return h;
    };
    CHECK(entropy(sharp.weights) < entropy(flat.weights));
    // excluded from training: not in the parameter enumeration
    FusionLayer probe = layer;
    for (const ParamRef& r : param_refs(probe, "f/"))
        CHECK(r.name.find("temperature") == std::string::npos);
}

TEST_CASE("adapters project native widths onto the common dim") {
    Rng rng(21);
    EnsembleModel model = EnsembleModel::create({5, 7, 3}, 4, 2, rng);
    CHECK(model.models() == 3);
    CHECK(model.common_dim() == 4);
    CHECK(model.adapters[1].rows() == 7);

    std::vector<Matrix> native;
    native.push_back(Matrix::randn(2, 5, rng));
    native.push_back(Matrix::randn(2, 7, rng));
    native.push_back(Matrix::randn(2, 3, rng));
    StackedOutputs stacked = apply_adapters(model, native);
    CHECK(stacked.models() == 3);
    CHECK(stacked.length() == 2);
    CHECK(stacked.dim() == 4);

    // row 0 of model 2 by hand
    for (std::size_t j = 0; j < 4; ++j) {
        double expect = 0.0;
        for (std::size_t c = 0; c < 3; ++c) expect += native[2](0, c) * model.adapters[2](c, j);
        CHECK(stacked.reps[2](0, j) == doctest::Approx(expect).epsilon(1e-13));
    }

    std::vector<ParamRef> refs = param_refs(model, "ens/");
    std::size_t total = 0;
    for (const ParamRef& r : refs) total += r.size;
    CHECK(total == 5 * 4 + 7 * 4 + 3 * 4 + (4 * 2) * 3 + 2);  // adapters + projections + query
}

}  // TEST_SUITE
