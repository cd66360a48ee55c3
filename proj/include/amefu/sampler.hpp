#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amefu/featurestore.hpp"
#include "amefu/rng.hpp"

namespace amefu::sampler {

enum class ClipMode { random, center };
enum class Phase { train, test };

// Frame selection for one modality: per-segment start offsets resolved to
// num_seg * num_f frame indices. When a segment is shorter than num_f the
// indices clamp to the segment's last frame, so the clip length never varies.
struct ClipPlan {
    std::size_t num_seg = 0;
    std::size_t num_f = 0;
    std::vector<std::size_t> offsets; // length num_seg
    std::vector<std::size_t> indices; // length num_seg * num_f

    bool same_offsets(const ClipPlan& other) const { return offsets == other.offsets; }
};

struct PairedClips {
    ClipPlan rgb_plan;
    ClipPlan depth_plan;
    bool matched = false; // true iff rgb and depth offsets coincide
};

struct EpisodeVideo {
    std::size_t record_index = 0; // into Dataset::records
    std::size_t slot = 0;         // episode-local class slot, 0..n_way-1
    std::vector<PairedClips> pairs;
};

// One N-way-K-shot task: n_way*k_shot support videos plus a single query.
struct Episode {
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::vector<EpisodeVideo> support; // k_shot entries per slot
    EpisodeVideo query;
};

struct EpisodeParams {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t num_seg = 4;
    std::size_t num_f = 4;
    std::size_t num_aug = 2;
    Phase phase = Phase::train;
    // When true, augmented pairs redraw the RGB offsets as well as the depth
    // offsets instead of holding the RGB clip fixed.
    bool resample_rgb = false;
};

// Balanced partition of [0, t) into num_seg contiguous segments whose lengths
// differ by at most one, longer segments first. Short videos produce empty
// trailing segments.
std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(std::size_t t,
                                                                std::size_t num_seg);

ClipPlan sample_clip(std::size_t t, std::size_t num_seg, std::size_t num_f, ClipMode mode,
                     Rng& rng);

// 1 + num_aug pairs: the first is strictly matched; the rest keep the RGB
// plan and redraw depth offsets (unless resample_rgb).
std::vector<PairedClips> sample_pairs(std::size_t t, std::size_t num_seg, std::size_t num_f,
                                      std::size_t num_aug, Rng& rng, bool resample_rgb = false);

// Draws an episode from one split. Train phase attaches 1+num_aug random
// pairs per video; test phase attaches a single matched center pair.
Episode sample_episode(const featurestore::Dataset& ds, const std::string& split,
                       const EpisodeParams& params, Rng& rng);

} // namespace amefu::sampler
