#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amefu/dgadain.hpp"
#include "amefu/embed.hpp"
#include "amefu/featurestore.hpp"
#include "amefu/sampler.hpp"

namespace amefu::trainer {

struct TrainConfig {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t epochs = 6;
    std::size_t episodes_per_epoch = 2000;
    double lr = 2e-5;
    double momentum = 0.9;
    double lr_decay_factor = 0.1;
    std::size_t lr_decay_after_epochs = 0; // 0 = no decay
    std::size_t num_seg = 4;
    std::size_t num_f = 4;
    std::size_t num_aug = 2;
    std::uint64_t seed = 0;
    double eps = 1e-5;
    dgadain::InitScheme init = dgadain::InitScheme::defaults;
    embed::Mode mode = embed::Mode::dgadain;
    bool resample_rgb = false;
    bool per_frame_norm = false;
    // One optimizer update per clip pair by default; when set, gradients of
    // the 1+num_aug pairs are summed into a single update per episode.
    bool accumulate_pairs = false;
    double grad_clip = 0.0; // 0 = off; otherwise max global grad norm
    std::size_t val_episodes = 0; // per-epoch validation episodes, 0 = off
    std::string out_dir;  // checkpoints land here when non-empty
    std::string log_path; // training log file when non-empty

    void validate() const;
};

struct LogEntry {
    std::size_t epoch = 0;   // 1-based
    std::size_t episode = 0; // 1-based within the epoch
    std::size_t pair = 0;    // 0 = matched pair
    double loss = 0.0;
    bool correct = false;
    double lr = 0.0;
};

std::string format_log_entry(const LogEntry& e);

struct TrainState {
    dgadain::DgadainParams params;
    dgadain::DgadainParams velocity; // same shapes as params
    std::size_t epoch = 0;
    std::size_t episode = 0;
    double momentum = 0.9;
    double grad_clip = 0.0;
    double running_loss = 0.0;
    double running_acc = 0.0;
    std::size_t updates = 0;
};

struct TrainResult {
    dgadain::DgadainParams params;
    dgadain::DgadainParams velocity;
    std::vector<LogEntry> log;
    std::vector<double> val_accuracy; // one entry per epoch when enabled
};

// v <- momentum*v + g ; p <- p - lr*v. Aborts on non-finite gradients,
// naming the parameter block and the current episode.
void sgd_step(TrainState& state, const dgadain::DgadainGrads& grads, double lr);

// Runs the 1+num_aug clip pairs of one sampled episode: embed, episode loss,
// backprop, update (or accumulate). Appends one log entry per pair.
void train_episode(TrainState& state, const featurestore::Dataset& ds,
                   const sampler::Episode& episode, const TrainConfig& config, double lr,
                   std::vector<LogEntry>& log);

TrainResult train(const TrainConfig& config, const featurestore::Dataset& ds);

double lr_for_epoch(const TrainConfig& config, std::size_t epoch);

} // namespace amefu::trainer
