#pragma once

#include <vector>

#include "amefu/matrix.hpp"

namespace amefu::classifier {

enum class Metric { cosine, euclidean };
enum class BaselineMode { rgb_only, concat };

// One episode's embedded videos: n_way*k_shot support vectors with their
// class slots, plus the single query. All vectors are unit-norm by
// construction (the embedders normalize).
struct EpisodeFeatures {
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::vector<std::vector<double>> support; // n_way * k_shot
    std::vector<std::size_t> slots;           // parallel to support
    std::vector<double> query;
    std::size_t true_slot = 0;
};

struct Prototypes {
    std::vector<std::vector<double>> p; // n_way vectors, slot-indexed
};

struct EpisodeLossResult {
    double loss = 0.0;
    std::vector<double> probs;
    std::vector<double> grad_query;
    std::vector<std::vector<double>> grad_support; // parallel to ep.support
};

// Per-slot mean of the support vectors. Prototypes are not re-normalized;
// the cosine score absorbs magnitude.
Prototypes compute_prototypes(const EpisodeFeatures& ep);

// softmax over per-slot similarity scores. cosine scores the similarity
// directly; euclidean uses the negated distance. No temperature.
std::vector<double> score_query(const Prototypes& protos, std::span<const double> query,
                                Metric metric = Metric::cosine);

// Cross-entropy of the query's score distribution against its true slot,
// with exact gradients w.r.t. the query and every support vector.
EpisodeLossResult episode_loss(const EpisodeFeatures& ep, Metric metric = Metric::cosine);

// Deterministic argmax: lowest slot wins ties.
std::size_t argmax_slot(std::span<const double> probs);

// Parameter-free embeddings used for comparison: mean-pooled RGB, or the
// two mean-pooled streams concatenated. L2-normalized like fuse_video.
std::vector<double> baseline_embed(BaselineMode mode, const Matrix& rgb_clip,
                                   const Matrix& depth_clip);

} // namespace amefu::classifier
