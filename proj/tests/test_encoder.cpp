#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "ner/encoder.hpp"
#include "ner/numerics.hpp"
#include "ner/params.hpp"
#include "ner/rng.hpp"

using namespace ner;

namespace {

Vocabulary tiny_vocab() {
    return Vocabulary({kPadToken, kUnkToken, kMaskToken, "aa", "bb", "cc", "dd", "zzz"});
}

EncoderConfig tiny_config(EncoderVariant variant = EncoderVariant::bidirectional_attention,
                          std::size_t layers = 4) {
    EncoderConfig cfg;
    cfg.vocab_size = tiny_vocab().size();
    cfg.hidden_dim = 8;
    cfg.num_layers = layers;
    cfg.num_heads = 2;
    cfg.ff_dim = 16;
    cfg.dropout = 0.0;
    cfg.max_len = 8;
    cfg.variant = variant;
    return cfg;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("vocabulary reserves special ids and maps unknowns") {
    Vocabulary v = tiny_vocab();
    CHECK(v.id(kPadToken) == Vocabulary::kPad);
    CHECK(v.id(kUnkToken) == Vocabulary::kUnk);
    CHECK(v.id(kMaskToken) == Vocabulary::kMask);
    CHECK(v.id("aa") == 3);
    CHECK(v.id("never-seen") == Vocabulary::kUnk);
    CHECK(v.surface(3) == "aa");

    std::vector<Sentence> corpus(1);
    corpus[0].tokens = {"x", "y", "x"};
    corpus[0].tags = {0, 0, 0};
    Vocabulary built = Vocabulary::build(corpus);
    CHECK(built.size() == 5);  // 3 reserved + x + y
    CHECK(built.id("x") != built.id("y"));
    CHECK(built.id("x") >= 3);
}

TEST_CASE("config validation") {
    EncoderConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    SUBCASE("indivisible heads") {
        cfg.num_heads = 3;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SUBCASE("too shallow for the averaging range") {
        cfg.num_layers = 3;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SUBCASE("dropout bounds") {
        cfg.dropout = 1.0;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
}

TEST_CASE("forward is deterministic in eval mode") {
    Rng init(7);
    TokenEncoder enc = TokenEncoder::create(tiny_config(), tiny_vocab(), init);
    std::vector<std::string> tokens{"aa", "bb", "cc", "unknown-token"};
    Rng r1(1), r2(999);  // eval mode must ignore the stream
    LayerStack s1 = encode(enc, tokens, false, r1);
    LayerStack s2 = encode(enc, tokens, false, r2);
    REQUIRE(s1.outputs.size() == enc.config.num_layers);
    for (std::size_t l = 0; l < s1.outputs.size(); ++l)
        CHECK(max_abs_diff(s1.outputs[l], s2.outputs[l]) == 0.0);
    CHECK(s1.outputs[0].rows() == tokens.size());
    CHECK(s1.outputs[0].cols() == enc.config.hidden_dim);
}

TEST_CASE("dropout perturbs training mode but follows the seed") {
    EncoderConfig cfg = tiny_config();
    cfg.dropout = 0.4;
    Rng init(7);
    TokenEncoder enc = TokenEncoder::create(cfg, tiny_vocab(), init);
    std::vector<std::string> tokens{"aa", "bb", "cc"};

    Rng ra(5), rb(5), rc(6);
    Matrix a = layer_average(encode(enc, tokens, true, ra));
    Matrix b = layer_average(encode(enc, tokens, true, rb));
    Matrix c = layer_average(encode(enc, tokens, true, rc));
    CHECK(max_abs_diff(a, b) == 0.0);   // same stream, same masks
    CHECK(max_abs_diff(a, c) > 1e-9);   // different stream

    Rng rd(5);
    Matrix eval = layer_average(encode(enc, tokens, false, rd));
    CHECK(max_abs_diff(a, eval) > 1e-9);
}

TEST_CASE("layer averaging spans the three layers before the last") {
    Rng init(11);
    TokenEncoder enc = TokenEncoder::create(tiny_config(EncoderVariant::bidirectional_attention, 5),
                                            tiny_vocab(), init);
    std::vector<std::string> tokens{"aa", "dd"};
    Rng rng(0);
    LayerStack stack = encode(enc, tokens, false, rng);
    REQUIRE(stack.outputs.size() == 5);
    Matrix avg = layer_average(stack);
    for (std::size_t i = 0; i < avg.rows(); ++i)
        for (std::size_t j = 0; j < avg.cols(); ++j) {
            double expect = (stack.outputs[1](i, j) + stack.outputs[2](i, j) +
                             stack.outputs[3](i, j)) / 3.0;
            CHECK(avg(i, j) == doctest::Approx(expect).epsilon(1e-15));
        }
}

TEST_CASE("causal attention never looks ahead") {
    Rng init(23);
    TokenEncoder enc = TokenEncoder::create(tiny_config(EncoderVariant::causal_attention),
                                            tiny_vocab(), init);
    std::vector<std::string> base{"aa", "bb", "cc", "dd", "aa"};
    std::vector<std::string> changed = base;
    changed[3] = "zzz";

    Rng rng(0);
    Matrix a = layer_average(encode(enc, base, false, rng));
    Matrix b = layer_average(encode(enc, changed, false, rng));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            CHECK(a(i, j) == b(i, j));  // bitwise: positions before the edit
    double tail = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) tail = std::max(tail, std::abs(a(3, j) - b(3, j)));
    CHECK(tail > 1e-9);
}

TEST_CASE("bidirectional attention sees the whole sentence") {
    Rng init(23);
    TokenEncoder enc = TokenEncoder::create(tiny_config(), tiny_vocab(), init);
    std::vector<std::string> base{"aa", "bb", "cc", "dd", "aa"};
    std::vector<std::string> changed = base;
    changed[3] = "zzz";
    Rng rng(0);
    Matrix a = layer_average(encode(enc, base, false, rng));
    Matrix b = layer_average(encode(enc, changed, false, rng));
    double head = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) head = std::max(head, std::abs(a(0, j) - b(0, j)));
    CHECK(head > 1e-12);
}

TEST_CASE("analytic gradients match finite differences") {
    for (EncoderVariant variant :
         {EncoderVariant::bidirectional_attention, EncoderVariant::causal_attention}) {
        Rng init(31);
        TokenEncoder enc = TokenEncoder::create(tiny_config(variant), tiny_vocab(), init);
        std::vector<std::string> tokens{"aa", "bb", "aa"};

        Rng wrng(8);
        Matrix w = Matrix::randn(tokens.size(), enc.config.hidden_dim, wrng);

        auto loss_of = [&](const TokenEncoder& e) {
            Rng rng(0);
            Matrix avg = layer_average(encode(e, tokens, false, rng));
            double s = 0.0;
            for (std::size_t i = 0; i < avg.size(); ++i) s += avg.data()[i] * w.data()[i];
            return s;
        };

        Rng rng(0);
        EncoderCache cache;
        LayerStack stack = encode(enc, tokens, false, rng, &cache);
        (void)stack;
        EncoderParams grads = encoder_backward(enc, w, cache);

        std::vector<ParamRef> p_refs = param_refs(enc.params, "e/");
        std::vector<ParamRef> g_refs = param_refs(grads, "e/");
        std::vector<double> point = flatten(p_refs);
        std::vector<double> grad = flatten(g_refs);
        auto f = [&](const std::vector<double>& x) {
            unflatten(x, p_refs);
            return loss_of(enc);
        };
        double err = finite_diff_check(f, grad, point, 1e-5);
        unflatten(point, p_refs);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("tokens absent from the input get zero embedding gradient") {
    Rng init(3);
    TokenEncoder enc = TokenEncoder::create(tiny_config(), tiny_vocab(), init);
    std::vector<std::string> tokens{"aa", "bb"};
    Rng rng(0);
    EncoderCache cache;
    (void)encode(enc, tokens, false, rng, &cache);
    Matrix upstream(2, enc.config.hidden_dim, 1.0);
    EncoderParams grads = encoder_backward(enc, upstream, cache);

    int zzz = enc.vocab.id("zzz");
    for (std::size_t j = 0; j < enc.config.hidden_dim; ++j) {
        CHECK(grads.token_embedding(static_cast<std::size_t>(zzz), j) == 0.0);
        CHECK(grads.position_embedding(5, j) == 0.0);  // beyond the sentence
    }
    // used rows receive signal
    double used = 0.0;
    for (std::size_t j = 0; j < enc.config.hidden_dim; ++j)
        used = std::max(used, std::abs(grads.token_embedding(3, j)));
    CHECK(used > 0.0);
}

TEST_CASE("parameter enumeration covers the whole model") {
    Rng init(5);
    TokenEncoder enc = TokenEncoder::create(tiny_config(), tiny_vocab(), init);
    std::vector<ParamRef> refs = param_refs(enc.params, "m0/");
    std::size_t total = 0;
    for (const ParamRef& r : refs) {
        CHECK(r.name.starts_with("m0/"));
        total += r.size;
    }
    const EncoderConfig& c = enc.config;
    std::size_t per_layer = 4 * c.hidden_dim * c.hidden_dim + 4 * c.hidden_dim +
                            c.hidden_dim * c.ff_dim + c.ff_dim +
                            c.ff_dim * c.hidden_dim + c.hidden_dim + 4 * c.hidden_dim;
    std::size_t expect = c.vocab_size * c.hidden_dim + c.max_len * c.hidden_dim +
                         c.num_layers * per_layer;
    CHECK(total == expect);

    EncoderParams z = zero_params_like(enc);
    std::vector<double> flat = flatten(param_refs(z, "m0/"));
    for (double v : flat) CHECK(v == 0.0);
    CHECK(flat.size() == total);
}

TEST_CASE("sentences longer than max_len are rejected") {
    Rng init(9);
    TokenEncoder enc = TokenEncoder::create(tiny_config(), tiny_vocab(), init);
    std::vector<std::string> tokens(enc.config.max_len + 1, "aa");
    Rng rng(0);
    CHECK_THROWS_AS((void)encode(enc, tokens, false, rng), std::invalid_argument);
}

}  // TEST_SUITE
