#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amefu/dgadain.hpp"
#include "amefu/embed.hpp"
#include "amefu/featurestore.hpp"
#include "amefu/trainer.hpp"

namespace amefu::evaluator {

struct EvalConfig {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t episodes = 10000;
    std::string split = "novel";
    embed::Mode mode = embed::Mode::dgadain;
    std::uint64_t seed = 0;
    std::size_t num_seg = 4;
    std::size_t num_f = 4;
    bool per_frame_norm = false;
    // Robustness probe: depth clips are redrawn in random mode at test time
    // while the RGB clip stays centered. An extension of the matched-pair
    // protocol, used for the augmentation ablation.
    bool shifted_depth_probe = false;
    std::size_t threads = 1;

    void validate() const;
};

struct EvalReport {
    std::string mode;
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::size_t episodes = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    double ci95 = 0.0; // normal-approximation 95% half-width
    std::vector<std::vector<std::size_t>> confusion; // [true slot][predicted slot]
    std::map<std::uint32_t, std::pair<std::size_t, std::size_t>>
        per_class; // global class id -> (correct, total)

    std::string result_line() const;
};

// Runs config.episodes test-phase episodes against frozen parameters.
// Episode i draws from a stream derived from (seed, i), so the report is
// identical whether episodes run serially or across threads.
EvalReport evaluate(const dgadain::DgadainParams& params, const featurestore::Dataset& ds,
                    const EvalConfig& config);

struct AblateAxes {
    std::vector<embed::Mode> modes;     // empty = base mode only
    std::vector<std::size_t> num_augs;  // empty = base num_aug only
    std::vector<std::size_t> k_shots;   // empty = base k_shot only
};

struct AblateCell {
    embed::Mode mode;
    std::size_t num_aug = 0;
    std::size_t k_shot = 0;
    EvalReport report;
};

// Trains each parametric cell (one checkpoint per distinct mode/num_aug) and
// evaluates every cell under a shared seed discipline. When a num_aug axis
// is present the evaluation uses the shifted-depth probe.
std::vector<AblateCell> ablate(const featurestore::Dataset& ds,
                               const trainer::TrainConfig& train_base,
                               const EvalConfig& eval_base, const AblateAxes& axes);

std::string ablate_csv(const std::vector<AblateCell>& cells);

} // namespace amefu::evaluator
