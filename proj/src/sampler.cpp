#include "amefu/sampler.hpp"

#include <algorithm>

#include "amefu/errors.hpp"

namespace amefu::sampler {

std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(std::size_t t,
                                                                std::size_t num_seg) {
    if (t < 1 || num_seg < 1)
        throw ShapeError("segment_bounds: t and num_seg must be >= 1");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(num_seg);
    const std::size_t base = t / num_seg;
    const std::size_t extra = t % num_seg; // first `extra` segments get one more frame
    std::size_t start = 0;
    for (std::size_t s = 0; s < num_seg; ++s) {
        const std::size_t len = base + (s < extra ? 1 : 0);
        out.emplace_back(start, len);
        start += len;
    }
    return out;
}

namespace {

std::vector<std::size_t> resolve_indices(
    const std::vector<std::pair<std::size_t, std::size_t>>& bounds,
    const std::vector<std::size_t>& offsets, std::size_t num_f, std::size_t t) {
    std::vector<std::size_t> indices;
    indices.reserve(bounds.size() * num_f);
    for (std::size_t s = 0; s < bounds.size(); ++s) {
        const auto [start, len] = bounds[s];
        for (std::size_t f = 0; f < num_f; ++f) {
            std::size_t idx;
            if (len == 0) {
                // empty segment: repeat the previous segment's last frame
                idx = start == 0 ? 0 : start - 1;
            } else {
                idx = start + std::min(offsets[s] + f, len - 1);
            }
            indices.push_back(std::min(idx, t - 1));
        }
    }
    return indices;
}

} // namespace

ClipPlan sample_clip(std::size_t t, std::size_t num_seg, std::size_t num_f, ClipMode mode,
                     Rng& rng) {
    if (t < 1 || num_seg < 1 || num_f < 1)
        throw ShapeError("sample_clip: t, num_seg and num_f must be >= 1");
    const auto bounds = segment_bounds(t, num_seg);
    ClipPlan plan;
    plan.num_seg = num_seg;
    plan.num_f = num_f;
    plan.offsets.resize(num_seg);
    for (std::size_t s = 0; s < num_seg; ++s) {
        const std::size_t len = bounds[s].second;
        const std::size_t slack = len > num_f ? len - num_f : 0;
        plan.offsets[s] = mode == ClipMode::center ? slack / 2 : rng.uniform_below(slack + 1);
    }
    plan.indices = resolve_indices(bounds, plan.offsets, num_f, t);
    return plan;
}

std::vector<PairedClips> sample_pairs(std::size_t t, std::size_t num_seg, std::size_t num_f,
                                      std::size_t num_aug, Rng& rng, bool resample_rgb) {
    std::vector<PairedClips> pairs;
    pairs.reserve(1 + num_aug);

    ClipPlan rgb = sample_clip(t, num_seg, num_f, ClipMode::random, rng);
    PairedClips matched;
    matched.rgb_plan = rgb;
    matched.depth_plan = rgb;
    matched.matched = true;
    pairs.push_back(std::move(matched));

    for (std::size_t a = 0; a < num_aug; ++a) {
        PairedClips p;
        p.rgb_plan = resample_rgb ? sample_clip(t, num_seg, num_f, ClipMode::random, rng) : rgb;
        p.depth_plan = sample_clip(t, num_seg, num_f, ClipMode::random, rng);
        p.matched = p.rgb_plan.same_offsets(p.depth_plan);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

Episode sample_episode(const featurestore::Dataset& ds, const std::string& split,
                       const EpisodeParams& params, Rng& rng) {
    if (params.n_way < 1 || params.k_shot < 1)
        throw SamplingError("sample_episode: n_way and k_shot must be >= 1");
    const auto& split_set = ds.split_classes(split);

    // Every class we might sample needs k_shot support videos plus a distinct
    // query candidate.
    std::vector<std::uint32_t> classes;
    classes.reserve(split_set.size());
    for (std::uint32_t c : split_set) {
        auto it = ds.by_class.find(c);
        const std::size_t n = it == ds.by_class.end() ? 0 : it->second.size();
        if (n < params.k_shot + 1)
            throw SamplingError("sample_episode: class " + std::to_string(c) + " has " +
                                std::to_string(n) + " videos, needs " +
                                std::to_string(params.k_shot + 1));
        classes.push_back(c);
    }
    if (classes.size() < params.n_way)
        throw SamplingError("sample_episode: split '" + split + "' has " +
                            std::to_string(classes.size()) + " classes, needs " +
                            std::to_string(params.n_way));

    // Partial Fisher-Yates: the first n_way entries are the sampled classes,
    // already in random slot order.
    for (std::size_t i = 0; i < params.n_way; ++i) {
        const std::size_t j = i + rng.uniform_below(classes.size() - i);
        std::swap(classes[i], classes[j]);
    }

    Episode ep;
    ep.n_way = params.n_way;
    ep.k_shot = params.k_shot;

    const std::size_t query_slot = rng.uniform_below(params.n_way);

    for (std::size_t slot = 0; slot < params.n_way; ++slot) {
        const auto& vids = ds.by_class.at(classes[slot]);
        const bool with_query = slot == query_slot;
        const std::size_t want = params.k_shot + (with_query ? 1 : 0);
        // sample `want` distinct videos from this class
        std::vector<std::size_t> picks(vids.size());
        for (std::size_t i = 0; i < vids.size(); ++i) picks[i] = vids[i];
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + rng.uniform_below(picks.size() - i);
            std::swap(picks[i], picks[j]);
        }
        for (std::size_t i = 0; i < params.k_shot; ++i) {
            EpisodeVideo v;
            v.record_index = picks[i];
            v.slot = slot;
            ep.support.push_back(std::move(v));
        }
        if (with_query) {
            ep.query.record_index = picks[params.k_shot];
            ep.query.slot = slot;
        }
    }

    auto attach = [&](EpisodeVideo& v) {
        const std::size_t t = ds.records[v.record_index].t;
        if (params.phase == Phase::train) {
            v.pairs = sample_pairs(t, params.num_seg, params.num_f, params.num_aug, rng,
                                   params.resample_rgb);
        } else {
            ClipPlan center = sample_clip(t, params.num_seg, params.num_f, ClipMode::center, rng);
            PairedClips p;
            p.rgb_plan = center;
            p.depth_plan = center;
            p.matched = true;
            v.pairs = {std::move(p)};
        }
    };
    for (auto& v : ep.support) attach(v);
    attach(ep.query);
    return ep;
}

} // namespace amefu::sampler
