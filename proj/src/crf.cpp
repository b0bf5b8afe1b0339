#include "ner/crf.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ner/errors.hpp"
#include "ner/kernels.hpp"
#include "ner/numerics.hpp"

namespace ner {

CrfModel CrfModel::create(std::size_t input_dim, std::size_t num_tags, Rng& rng,
                          double init_scale) {
    CrfModel m;
    m.projection = Matrix::randn(input_dim, num_tags, rng, init_scale);
    m.bias.assign(num_tags, 0.0);
    m.transitions = Matrix::randn(num_tags, num_tags, rng, init_scale);
    m.start.assign(num_tags, 0.0);
    m.end.assign(num_tags, 0.0);
    return m;
}

EmissionTable emissions(const CrfModel& model, const Matrix& fused) {
    if (fused.cols() != model.projection.rows())
        throw std::invalid_argument("emissions: fused dim " + std::to_string(fused.cols()) +
                                    " does not match projection rows " +
                                    std::to_string(model.projection.rows()));
    Matrix e = matmul(fused, model.projection);
    for (std::size_t i = 0; i < e.rows(); ++i)
        kernels::axpy(1.0, model.bias.data(), e.row(i), e.cols());
    return e;
}

Matrix emissions_backward(const CrfModel& model, const Matrix& fused, const Matrix& d_emissions,
                          Matrix& d_projection, std::vector<double>& d_bias) {
    if (!d_projection.same_shape(model.projection))
        throw std::invalid_argument("emissions_backward: gradient shape mismatch");
    d_projection.add_scaled(matmul_ta(fused, d_emissions), 1.0);
    for (std::size_t i = 0; i < d_emissions.rows(); ++i)
        kernels::axpy(1.0, d_emissions.row(i), d_bias.data(), d_bias.size());
    return matmul_tb(d_emissions, model.projection);
}

namespace {

void check_gold(const EmissionTable& e, const std::vector<int>& gold, std::size_t T) {
    if (gold.size() != e.rows())
        throw std::invalid_argument("gold tag sequence length " + std::to_string(gold.size()) +
                                    " does not match emissions length " + std::to_string(e.rows()));
    for (int t : gold)
        if (t < 0 || static_cast<std::size_t>(t) >= T)
            throw std::invalid_argument("gold tag " + std::to_string(t) + " out of range");
}

// alpha[i][t] = log sum over prefixes ending in t at position i.
Matrix forward_lattice(const EmissionTable& e, const CrfModel& model) {
    const std::size_t L = e.rows(), T = model.num_tags();
    Matrix alpha(L, T);
    for (std::size_t t = 0; t < T; ++t) alpha(0, t) = model.start[t] + e(0, t);
    std::vector<double> terms(T);
    for (std::size_t i = 1; i < L; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t u = 0; u < T; ++u)
                terms[u] = alpha(i - 1, u) + model.transitions(u, t);
            alpha(i, t) = e(i, t) + log_sum_exp(terms);
        }
    }
    return alpha;
}

// beta[i][u] = log sum over suffixes starting after position i in tag u.
Matrix backward_lattice(const EmissionTable& e, const CrfModel& model) {
    const std::size_t L = e.rows(), T = model.num_tags();
    Matrix beta(L, T);
    for (std::size_t t = 0; t < T; ++t) beta(L - 1, t) = model.end[t];
    std::vector<double> terms(T);
    for (std::size_t i = L - 1; i-- > 0;) {
        for (std::size_t u = 0; u < T; ++u) {
            for (std::size_t t = 0; t < T; ++t)
                terms[t] = model.transitions(u, t) + e(i + 1, t) + beta(i + 1, t);
            beta(i, u) = log_sum_exp(terms);
        }
    }
    return beta;
}

}  // namespace

double score_sequence(const EmissionTable& e, const CrfModel& model, const std::vector<int>& tags) {
    check_gold(e, tags, model.num_tags());
    double s = model.start[static_cast<std::size_t>(tags[0])] +
               model.end[static_cast<std::size_t>(tags.back())];
    for (std::size_t i = 0; i < tags.size(); ++i) {
        s += e(i, static_cast<std::size_t>(tags[i]));
        if (i + 1 < tags.size())
            s += model.transitions(static_cast<std::size_t>(tags[i]),
                                   static_cast<std::size_t>(tags[i + 1]));
    }
    return s;
}

double log_partition(const EmissionTable& e, const CrfModel& model) {
    if (e.rows() == 0) throw std::invalid_argument("log_partition: empty emission table");
    const std::size_t L = e.rows(), T = model.num_tags();
    Matrix alpha = forward_lattice(e, model);
    std::vector<double> finals(T);
    for (std::size_t t = 0; t < T; ++t) finals[t] = alpha(L - 1, t) + model.end[t];
    return log_sum_exp(finals);
}

double nll_loss(const EmissionTable& e, const CrfModel& model, const std::vector<int>& gold) {
    check_gold(e, gold, model.num_tags());
    return log_partition(e, model) - score_sequence(e, model, gold);
}

CrfGradients crf_backward(const EmissionTable& e, const CrfModel& model,
                          const std::vector<int>& gold) {
    check_gold(e, gold, model.num_tags());
    const std::size_t L = e.rows(), T = model.num_tags();
    Matrix alpha = forward_lattice(e, model);
    Matrix beta = backward_lattice(e, model);

    std::vector<double> finals(T);
    for (std::size_t t = 0; t < T; ++t) finals[t] = alpha(L - 1, t) + model.end[t];
    double log_z = log_sum_exp(finals);

    CrfGradients g;
    g.emissions = Matrix(L, T);
    g.transitions = Matrix(T, T);
    g.start.assign(T, 0.0);
    g.end.assign(T, 0.0);

    // Unary marginals minus gold indicators.
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t t = 0; t < T; ++t)
            g.emissions(i, t) = std::exp(alpha(i, t) + beta(i, t) - log_z);
    for (std::size_t i = 0; i < L; ++i) g.emissions(i, static_cast<std::size_t>(gold[i])) -= 1.0;

    // Pairwise marginals minus gold transition counts.
    for (std::size_t i = 0; i + 1 < L; ++i)
        for (std::size_t u = 0; u < T; ++u)
            for (std::size_t t = 0; t < T; ++t)
                g.transitions(u, t) += std::exp(alpha(i, u) + model.transitions(u, t) +
                                                e(i + 1, t) + beta(i + 1, t) - log_z);
    for (std::size_t i = 0; i + 1 < L; ++i)
        g.transitions(static_cast<std::size_t>(gold[i]), static_cast<std::size_t>(gold[i + 1])) -= 1.0;

    for (std::size_t t = 0; t < T; ++t) {
        g.start[t] = std::exp(alpha(0, t) + beta(0, t) - log_z);
        g.end[t] = std::exp(alpha(L - 1, t) + model.end[t] - log_z);
    }
    g.start[static_cast<std::size_t>(gold[0])] -= 1.0;
    g.end[static_cast<std::size_t>(gold[L - 1])] -= 1.0;
    return g;
}

ViterbiResult viterbi(const EmissionTable& e, const CrfModel& model) {
    if (e.rows() == 0) throw std::invalid_argument("viterbi: empty emission table");
    const std::size_t L = e.rows(), T = model.num_tags();
    Matrix best(L, T);
    std::vector<std::vector<int>> back(L, std::vector<int>(T, 0));

    for (std::size_t t = 0; t < T; ++t) best(0, t) = model.start[t] + e(0, t);
    for (std::size_t i = 1; i < L; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            // Strict > with ascending u keeps the lowest predecessor on ties.
            double top = best(i - 1, 0) + model.transitions(0, t);
            int arg = 0;
            for (std::size_t u = 1; u < T; ++u) {
                double cand = best(i - 1, u) + model.transitions(u, t);
                if (cand > top) {
                    top = cand;
                    arg = static_cast<int>(u);
                }
            }
            best(i, t) = top + e(i, t);
            back[i][t] = arg;
        }
    }

    double top = best(L - 1, 0) + model.end[0];
    int last = 0;
    for (std::size_t t = 1; t < T; ++t) {
        double cand = best(L - 1, t) + model.end[t];
        if (cand > top) {
            top = cand;
            last = static_cast<int>(t);
        }
    }

    ViterbiResult r;
    r.score = top;
    r.tags.assign(L, 0);
    r.tags[L - 1] = last;
    for (std::size_t i = L - 1; i > 0; --i)
        r.tags[i - 1] = back[i][static_cast<std::size_t>(r.tags[i])];
    return r;
}

CrfModel constrain_bio(const CrfModel& model, const LabelScheme& scheme) {
    if (model.num_tags() != scheme.num_tags())
        throw std::invalid_argument("constrain_bio: model has " + std::to_string(model.num_tags()) +
                                    " tags, scheme has " + std::to_string(scheme.num_tags()));
    CrfModel out = model;
    const std::size_t T = model.num_tags();
    for (std::size_t v = 0; v < T; ++v) {
        int tag = static_cast<int>(v);
        if (!scheme.is_inside(tag)) continue;
        std::size_t type = scheme.type_of(tag);
        out.start[v] = kBioMaskScore;
        for (std::size_t u = 0; u < T; ++u) {
            int prev = static_cast<int>(u);
            bool legal = prev != LabelScheme::kOutside && scheme.type_of(prev) == type;
            if (!legal) out.transitions(u, v) = kBioMaskScore;
        }
    }
    return out;
}

std::vector<ParamRef> param_refs(CrfModel& m, const std::string& prefix) {
    return {ref(prefix + "projection", m.projection), ref(prefix + "bias", m.bias),
            ref(prefix + "transitions", m.transitions), ref(prefix + "start", m.start),
            ref(prefix + "end", m.end)};
}

CrfModel zero_crf_like(const CrfModel& m) {
    CrfModel z;
    z.projection = Matrix(m.projection.rows(), m.projection.cols());
    z.bias.assign(m.bias.size(), 0.0);
    z.transitions = Matrix(m.transitions.rows(), m.transitions.cols());
    z.start.assign(m.start.size(), 0.0);
    z.end.assign(m.end.size(), 0.0);
    return z;
}

}  // namespace ner
