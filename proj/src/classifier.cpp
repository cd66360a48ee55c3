#include "amefu/classifier.hpp"

#include <cmath>
#include <string>

#include "amefu/numerics.hpp"

namespace amefu::classifier {

namespace {

void check_episode(const EpisodeFeatures& ep) {
    if (ep.n_way < 1 || ep.k_shot < 1)
        throw ShapeError("episode: n_way and k_shot must be >= 1");
    if (ep.support.size() != ep.n_way * ep.k_shot || ep.slots.size() != ep.support.size())
        throw ShapeError("episode: expected " + std::to_string(ep.n_way * ep.k_shot) +
                         " support vectors, got " + std::to_string(ep.support.size()));
    if (ep.true_slot >= ep.n_way)
        throw ShapeError("episode: true slot out of range");
}

} // namespace

Prototypes compute_prototypes(const EpisodeFeatures& ep) {
    check_episode(ep);
    const std::size_t l = ep.query.size();
    Prototypes protos;
    protos.p.assign(ep.n_way, std::vector<double>(l, 0.0));
    std::vector<std::size_t> counts(ep.n_way, 0);
    for (std::size_t i = 0; i < ep.support.size(); ++i) {
        const auto& v = ep.support[i];
        if (v.size() != l)
            throw ShapeError("compute_prototypes: support vector width mismatch");
        const std::size_t s = ep.slots[i];
        if (s >= ep.n_way)
            throw ShapeError("compute_prototypes: slot out of range");
        for (std::size_t j = 0; j < l; ++j) protos.p[s][j] += v[j];
        ++counts[s];
    }
    for (std::size_t s = 0; s < ep.n_way; ++s) {
        if (counts[s] != ep.k_shot)
            throw ShapeError("compute_prototypes: slot " + std::to_string(s) + " has " +
                             std::to_string(counts[s]) + " vectors, expected " +
                             std::to_string(ep.k_shot));
        for (double& x : protos.p[s]) x /= static_cast<double>(ep.k_shot);
    }
    return protos;
}

std::vector<double> score_query(const Prototypes& protos, std::span<const double> query,
                                Metric metric) {
    if (protos.p.empty())
        throw ShapeError("score_query: no prototypes");
    if (numerics::norm(query) == 0.0)
        throw DegenerateInputError("score_query: zero-norm query");
    std::vector<double> scores(protos.p.size());
    for (std::size_t s = 0; s < protos.p.size(); ++s) {
        if (metric == Metric::cosine) {
            if (numerics::norm(protos.p[s]) == 0.0)
                throw DegenerateInputError("score_query: zero-norm prototype at slot " +
                                           std::to_string(s));
            scores[s] = numerics::cosine_similarity(query, protos.p[s]);
        } else {
            double d2 = 0.0;
            for (std::size_t j = 0; j < query.size(); ++j) {
                const double diff = query[j] - protos.p[s][j];
                d2 += diff * diff;
            }
            scores[s] = -std::sqrt(d2);
        }
    }
    return numerics::softmax(scores);
}

std::size_t argmax_slot(std::span<const double> probs) {
    if (probs.empty())
        throw ShapeError("argmax_slot: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return best;
}

EpisodeLossResult episode_loss(const EpisodeFeatures& ep, Metric metric) {
    check_episode(ep);
    const std::size_t l = ep.query.size();
    const Prototypes protos = compute_prototypes(ep);

    EpisodeLossResult res;
    res.probs = score_query(protos, ep.query, metric);
    res.loss = numerics::cross_entropy(res.probs, ep.true_slot);
    res.grad_query.assign(l, 0.0);
    res.grad_support.assign(ep.support.size(), std::vector<double>(l, 0.0));

    // With loss = -log p_y and p = softmax(s): dL/ds_c = p_c - [c == y].
    // When the clamp is active the loss is locally constant.
    if (res.probs[ep.true_slot] <= numerics::kProbClamp)
        return res;

    const double qn = numerics::norm(ep.query);
    std::vector<std::vector<double>> grad_proto(ep.n_way, std::vector<double>(l, 0.0));
    for (std::size_t c = 0; c < ep.n_way; ++c) {
        const double ds = res.probs[c] - (c == ep.true_slot ? 1.0 : 0.0);
        const auto& p = protos.p[c];
        if (metric == Metric::cosine) {
            const double pn = numerics::norm(p);
            const double s = numerics::dot(ep.query, p) / (qn * pn);
            // d cos / d q = p/(|q||p|) - s q/|q|^2 ; symmetric for p
            for (std::size_t j = 0; j < l; ++j) {
                res.grad_query[j] += ds * (p[j] / (qn * pn) - s * ep.query[j] / (qn * qn));
                grad_proto[c][j] = ds * (ep.query[j] / (qn * pn) - s * p[j] / (pn * pn));
            }
        } else {
            double d2 = 0.0;
            for (std::size_t j = 0; j < l; ++j) {
                const double diff = ep.query[j] - p[j];
                d2 += diff * diff;
            }
            const double dist = std::sqrt(d2);
            if (dist > 0.0) {
                // s = -dist; ds/dq = -(q - p)/dist
                for (std::size_t j = 0; j < l; ++j) {
                    const double g = -ds * (ep.query[j] - p[j]) / dist;
                    res.grad_query[j] += g;
                    grad_proto[c][j] = -g;
                }
            }
        }
    }

    // prototype = mean of its k_shot support vectors
    const double inv_k = 1.0 / static_cast<double>(ep.k_shot);
    for (std::size_t i = 0; i < ep.support.size(); ++i) {
        const auto& gp = grad_proto[ep.slots[i]];
        for (std::size_t j = 0; j < l; ++j) res.grad_support[i][j] = inv_k * gp[j];
    }
    return res;
}

std::vector<double> baseline_embed(BaselineMode mode, const Matrix& rgb_clip,
                                   const Matrix& depth_clip) {
    if (!rgb_clip.same_shape(depth_clip))
        throw ShapeError("baseline_embed: clip shapes differ");
    if (rgb_clip.rows == 0)
        throw ShapeError("baseline_embed: empty clip");
    const std::size_t D = rgb_clip.rows, L = rgb_clip.cols;

    auto pool = [D, L](const Matrix& m) {
        std::vector<double> out(L, 0.0);
        for (std::size_t d = 0; d < D; ++d) {
            auto row = m.row(d);
            for (std::size_t j = 0; j < L; ++j) out[j] += row[j];
        }
        for (double& v : out) v /= static_cast<double>(D);
        return out;
    };

    std::vector<double> pooled;
    if (mode == BaselineMode::rgb_only) {
        pooled = pool(rgb_clip);
    } else {
        pooled = pool(rgb_clip);
        auto dp = pool(depth_clip);
        pooled.insert(pooled.end(), dp.begin(), dp.end());
    }
    if (numerics::norm(pooled) == 0.0)
        throw DegenerateInputError("baseline_embed: pooled feature has zero norm");
    return numerics::l2_normalize(pooled);
}

} // namespace amefu::classifier
