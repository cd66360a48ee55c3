#pragma once

#include <string>
#include <vector>

#include "amefu/classifier.hpp"
#include "amefu/dgadain.hpp"
#include "amefu/featurestore.hpp"
#include "amefu/sampler.hpp"

namespace amefu::embed {

// How a <RGB clip, depth clip> pair becomes one video feature vector.
// dgadain: depth guides RGB (the main fusion). rgb_guide_depth swaps the
// stream roles. two_way averages the two directed fusions before the final
// normalization. rgb_only and concat are the parameter-free baselines.
enum class Mode { dgadain, rgb_only, concat, rgb_guide_depth, two_way };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);
bool mode_has_params(Mode m);

// Rows of `features` selected by the clip plan's frame indices.
Matrix gather_clip(const Matrix& features, const sampler::ClipPlan& plan);

std::vector<double> embed_video(Mode mode, const dgadain::DgadainParams& params,
                                const Matrix& rgb_clip, const Matrix& depth_clip,
                                const dgadain::PoolOptions& opts = {});

// Forward with enough state kept to push a feature-level gradient back into
// the fusion parameters. Only meaningful for parametric modes.
struct EmbedContext {
    Mode mode = Mode::dgadain;
    dgadain::PoolOptions opts;
    struct Branch {
        dgadain::FusionCache cache;
        Batch3 fused;
        std::vector<double> pooled;
    };
    std::vector<Branch> branches;
    std::vector<double> pooled;  // combined, pre-normalization
    std::vector<double> feature; // normalized output
};

EmbedContext embed_forward(Mode mode, const dgadain::DgadainParams& params,
                           const Matrix& rgb_clip, const Matrix& depth_clip,
                           const dgadain::PoolOptions& opts = {});

// Gradient of a scalar loss w.r.t. the fusion parameters, given the loss
// gradient w.r.t. this video's feature vector.
dgadain::DgadainGrads embed_backward(Mode mode, const dgadain::DgadainParams& params,
                                     const EmbedContext& ctx,
                                     std::span<const double> grad_feature);

// Embeds one episode video's chosen clip pair.
std::vector<double> embed_episode_video(Mode mode, const dgadain::DgadainParams& params,
                                        const featurestore::VideoRecord& record,
                                        const sampler::PairedClips& pair,
                                        const dgadain::PoolOptions& opts = {});

} // namespace amefu::embed
