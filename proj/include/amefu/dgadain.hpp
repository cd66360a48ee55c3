#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amefu/matrix.hpp"
#include "amefu/rng.hpp"

namespace amefu::dgadain {

enum class InitScheme { identity, defaults };

// The two learnable affine-generating maps. Row (b,d) of the guide stream is
// mapped to a scale gamma = w_s*guide + b_s and a shift beta = w_b*guide + b_b
// which deform the instance-normalized content stream.
struct DgadainParams {
    std::size_t l = 0;
    Matrix w_s;                // L x L
    std::vector<double> b_s;   // L
    Matrix w_b;                // L x L
    std::vector<double> b_b;   // L
    double eps = 1e-5;
};

// Everything the backward pass needs from a forward call.
struct FusionCache {
    Batch3 i_rgb;
    Batch3 i_d;
    Matrix mu;    // b x d
    Matrix sigma; // b x d
    Batch3 xhat;  // normalized content rows
    Batch3 gamma;
    Batch3 beta;
};

struct DgadainGrads {
    Matrix w_s;
    std::vector<double> b_s;
    Matrix w_b;
    std::vector<double> b_b;
    Batch3 i_rgb;
    Batch3 i_d;

    void add(const DgadainGrads& other);
    void scale(double factor);
};

DgadainGrads zero_grads(const DgadainParams& params, std::size_t b, std::size_t d);

// identity: w_s = w_b = 0, b_s = 1, b_b = 0, so the module reduces to plain
// instance normalization of the content stream. defaults: weights uniform in
// +-1/sqrt(l) with the same biases, so training starts near plain IN.
DgadainParams init_params(std::size_t l, InitScheme scheme, Rng& rng, double eps = 1e-5);

// fused[b,d] = gamma(b,d) .* (i_rgb[b,d] - mu) / sigma + beta(b,d), with mu
// and sigma computed per (b,d) row over the feature dimension.
std::pair<Batch3, FusionCache> forward(const DgadainParams& params, const Batch3& i_rgb,
                                       const Batch3& i_d);

// Exact gradients of any scalar loss through the forward pass, including the
// dependence of mu and sigma on the content stream (full Jacobian, no
// stop-gradient shortcuts).
DgadainGrads backward(const DgadainParams& params, const FusionCache& cache,
                      const Batch3& grad_fused);

struct PoolOptions {
    // Normalize each fused frame row before mean-pooling. The pooled vector
    // is L2-normalized in either case.
    bool per_frame_norm = false;
};

// Forward on a single video's (D, L) clip pair, mean-pooled over frames.
// Not normalized; callers that combine several fused outputs (two-way
// guidance) average these before the final normalization.
std::vector<double> forward_pooled(const DgadainParams& params, const Matrix& rgb_clip,
                                   const Matrix& depth_clip, const PoolOptions& opts,
                                   FusionCache* cache_out = nullptr);

// Full per-video embedding: forward, mean over frames, L2 normalize.
std::vector<double> fuse_video(const DgadainParams& params, const Matrix& rgb_clip,
                               const Matrix& depth_clip, const PoolOptions& opts = {});

// Parameter flattening for the finite-difference oracle: order w_s, b_s,
// w_b, b_b.
std::vector<double> flatten_params(const DgadainParams& params);
void unflatten_params(DgadainParams& params, std::span<const double> flat);
std::vector<double> flatten_grads(const DgadainGrads& grads);

// Checkpoint file: magic "AMFP", float64 payload, optional momentum buffers
// appended when trainer state is saved.
void save_checkpoint(const std::string& path, const DgadainParams& params,
                     const DgadainParams* momentum = nullptr);
DgadainParams load_checkpoint(const std::string& path, DgadainParams* momentum_out = nullptr);

} // namespace amefu::dgadain
