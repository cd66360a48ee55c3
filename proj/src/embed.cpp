#include "amefu/embed.hpp"

#include <cmath>

#include "amefu/numerics.hpp"

namespace amefu::embed {

Mode mode_from_string(const std::string& s) {
    if (s == "dgadain") return Mode::dgadain;
    if (s == "rgb_only") return Mode::rgb_only;
    if (s == "concat") return Mode::concat;
    if (s == "rgb_guide_depth") return Mode::rgb_guide_depth;
    if (s == "two_way") return Mode::two_way;
    throw ConfigError("unknown mode '" + s +
                      "' (expected dgadain|rgb_only|concat|rgb_guide_depth|two_way)");
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::dgadain: return "dgadain";
        case Mode::rgb_only: return "rgb_only";
        case Mode::concat: return "concat";
        case Mode::rgb_guide_depth: return "rgb_guide_depth";
        case Mode::two_way: return "two_way";
    }
    return "?";
}

bool mode_has_params(Mode m) {
    return m == Mode::dgadain || m == Mode::rgb_guide_depth || m == Mode::two_way;
}

Matrix gather_clip(const Matrix& features, const sampler::ClipPlan& plan) {
    Matrix out(plan.indices.size(), features.cols);
    for (std::size_t i = 0; i < plan.indices.size(); ++i) {
        const std::size_t idx = plan.indices[i];
        if (idx >= features.rows)
            throw IndexError("gather_clip: frame index out of range");
        auto src = features.row(idx);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

std::vector<double> embed_video(Mode mode, const dgadain::DgadainParams& params,
                                const Matrix& rgb_clip, const Matrix& depth_clip,
                                const dgadain::PoolOptions& opts) {
    switch (mode) {
        case Mode::rgb_only:
            return classifier::baseline_embed(classifier::BaselineMode::rgb_only, rgb_clip,
                                              depth_clip);
        case Mode::concat:
            return classifier::baseline_embed(classifier::BaselineMode::concat, rgb_clip,
                                              depth_clip);
        case Mode::dgadain:
            return dgadain::fuse_video(params, rgb_clip, depth_clip, opts);
        case Mode::rgb_guide_depth:
            return dgadain::fuse_video(params, depth_clip, rgb_clip, opts);
        case Mode::two_way: {
            auto a = dgadain::forward_pooled(params, rgb_clip, depth_clip, opts);
            auto b = dgadain::forward_pooled(params, depth_clip, rgb_clip, opts);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.5 * (a[i] + b[i]);
            if (numerics::norm(a) == 0.0)
                throw DegenerateInputError("embed_video: pooled feature has zero norm");
            return numerics::l2_normalize(a);
        }
    }
    throw ConfigError("embed_video: bad mode");
}

namespace {

EmbedContext::Branch run_branch(const dgadain::DgadainParams& params, const Matrix& content,
                                const Matrix& guide, const dgadain::PoolOptions& opts) {
    EmbedContext::Branch br;
    Batch3 c(1, content.rows, content.cols), g(1, guide.rows, guide.cols);
    c.data = content.data;
    g.data = guide.data;
    auto [fused, cache] = dgadain::forward(params, c, g);
    br.cache = std::move(cache);

    const std::size_t D = fused.d, L = fused.l;
    br.pooled.assign(L, 0.0);
    for (std::size_t di = 0; di < D; ++di) {
        auto row = fused.row(0, di);
        if (opts.per_frame_norm) {
            auto n = numerics::l2_normalize(row);
            for (std::size_t li = 0; li < L; ++li) br.pooled[li] += n[li];
        } else {
            for (std::size_t li = 0; li < L; ++li) br.pooled[li] += row[li];
        }
    }
    for (double& v : br.pooled) v /= static_cast<double>(D);
    br.fused = std::move(fused);
    return br;
}

// Gradient of y = v/|v| : g_v = (g_y - y (g_y . y)) / |v|
std::vector<double> l2_normalize_backward(std::span<const double> v, std::span<const double> y,
                                          std::span<const double> g_y) {
    const double n = numerics::norm(v);
    const double gy_dot_y = numerics::dot(g_y, y);
    std::vector<double> g_v(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) g_v[i] = (g_y[i] - y[i] * gy_dot_y) / n;
    return g_v;
}

dgadain::DgadainGrads branch_backward(const dgadain::DgadainParams& params,
                                      const EmbedContext::Branch& br,
                                      std::span<const double> grad_pooled,
                                      const dgadain::PoolOptions& opts) {
    const std::size_t D = br.fused.d, L = br.fused.l;
    Batch3 grad_fused(1, D, L);
    const double inv_d = 1.0 / static_cast<double>(D);
    for (std::size_t di = 0; di < D; ++di) {
        auto dst = grad_fused.row(0, di);
        if (opts.per_frame_norm) {
            auto f = br.fused.row(0, di);
            auto nrow = numerics::l2_normalize(f);
            std::vector<double> g_n(L);
            for (std::size_t li = 0; li < L; ++li) g_n[li] = grad_pooled[li] * inv_d;
            auto g_f = l2_normalize_backward(f, nrow, g_n);
            std::copy(g_f.begin(), g_f.end(), dst.begin());
        } else {
            for (std::size_t li = 0; li < L; ++li) dst[li] = grad_pooled[li] * inv_d;
        }
    }
    return dgadain::backward(params, br.cache, grad_fused);
}

} // namespace

EmbedContext embed_forward(Mode mode, const dgadain::DgadainParams& params,
                           const Matrix& rgb_clip, const Matrix& depth_clip,
                           const dgadain::PoolOptions& opts) {
    if (!mode_has_params(mode))
        throw ConfigError("embed_forward: mode '" + mode_to_string(mode) +
                          "' has no trainable parameters");
    EmbedContext ctx;
    ctx.mode = mode;
    ctx.opts = opts;
    if (mode == Mode::dgadain) {
        ctx.branches.push_back(run_branch(params, rgb_clip, depth_clip, opts));
        ctx.pooled = ctx.branches[0].pooled;
    } else if (mode == Mode::rgb_guide_depth) {
        ctx.branches.push_back(run_branch(params, depth_clip, rgb_clip, opts));
        ctx.pooled = ctx.branches[0].pooled;
    } else { // two_way
        ctx.branches.push_back(run_branch(params, rgb_clip, depth_clip, opts));
        ctx.branches.push_back(run_branch(params, depth_clip, rgb_clip, opts));
        ctx.pooled.resize(params.l);
        for (std::size_t i = 0; i < params.l; ++i)
            ctx.pooled[i] = 0.5 * (ctx.branches[0].pooled[i] + ctx.branches[1].pooled[i]);
    }
    if (numerics::norm(ctx.pooled) == 0.0)
        throw DegenerateInputError("embed_forward: pooled feature has zero norm");
    ctx.feature = numerics::l2_normalize(ctx.pooled);
    return ctx;
}

dgadain::DgadainGrads embed_backward(Mode mode, const dgadain::DgadainParams& params,
                                     const EmbedContext& ctx,
                                     std::span<const double> grad_feature) {
    if (ctx.mode != mode)
        throw ConfigError("embed_backward: context mode mismatch");
    auto g_pooled = l2_normalize_backward(ctx.pooled, ctx.feature, grad_feature);

    const double w = ctx.branches.size() == 2 ? 0.5 : 1.0;
    std::vector<double> g_branch(g_pooled.size());
    for (std::size_t i = 0; i < g_pooled.size(); ++i) g_branch[i] = w * g_pooled[i];

    dgadain::DgadainGrads total = branch_backward(params, ctx.branches[0], g_branch, ctx.opts);
    for (std::size_t b = 1; b < ctx.branches.size(); ++b) {
        // note: input grads have swapped stream roles across branches; only
        // the parameter blocks are meaningful on the summed result
        total.add(branch_backward(params, ctx.branches[b], g_branch, ctx.opts));
    }
    return total;
}

std::vector<double> embed_episode_video(Mode mode, const dgadain::DgadainParams& params,
                                        const featurestore::VideoRecord& record,
                                        const sampler::PairedClips& pair,
                                        const dgadain::PoolOptions& opts) {
    const Matrix rgb_clip = gather_clip(record.rgb, pair.rgb_plan);
    const Matrix depth_clip = gather_clip(record.depth, pair.depth_plan);
    return embed_video(mode, params, rgb_clip, depth_clip, opts);
}

} // namespace amefu::embed
