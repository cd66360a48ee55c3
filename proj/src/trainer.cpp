#include "amefu/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "amefu/classifier.hpp"
#include "amefu/numerics.hpp"

namespace amefu::trainer {

void TrainConfig::validate() const {
    // lr == 0 is allowed so a frozen run can serve as a no-op reference
    if (lr < 0.0)
        throw ConfigError("train config: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("train config: momentum must be in [0, 1)");
    if (epochs < 1)
        throw ConfigError("train config: epochs must be >= 1");
    if (episodes_per_epoch < 1)
        throw ConfigError("train config: episodes_per_epoch must be >= 1");
    if (n_way < 1 || k_shot < 1 || num_seg < 1 || num_f < 1)
        throw ConfigError("train config: n_way, k_shot, num_seg, num_f must be >= 1");
    if (eps <= 0.0)
        throw ConfigError("train config: eps must be > 0");
    if (!embed::mode_has_params(mode))
        throw ConfigError("train config: mode '" + embed::mode_to_string(mode) +
                          "' has no trainable parameters");
}

std::string format_log_entry(const LogEntry& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch=%zu episode=%zu pair=%zu loss=%.9g correct=%d lr=%.9g",
                  e.epoch, e.episode, e.pair, e.loss, e.correct ? 1 : 0, e.lr);
    return buf;
}

double lr_for_epoch(const TrainConfig& config, std::size_t epoch) {
    if (config.lr_decay_after_epochs == 0)
        return config.lr;
    const std::size_t steps = (epoch - 1) / config.lr_decay_after_epochs;
    return config.lr * std::pow(config.lr_decay_factor, static_cast<double>(steps));
}

namespace {

void check_finite(const std::vector<double>& v, const char* name, std::size_t episode) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericError(std::string("sgd_step: non-finite gradient in ") + name +
                               " at episode " + std::to_string(episode));
}

void clip_grads(dgadain::DgadainGrads& g, double max_norm) {
    double sq = 0.0;
    for (const auto* v : {&g.w_s.data, &g.b_s, &g.w_b.data, &g.b_b})
        for (double x : *v) sq += x * x;
    const double n = std::sqrt(sq);
    if (n > max_norm && n > 0.0) {
        const double s = max_norm / n;
        for (auto* v : {&g.w_s.data, &g.b_s, &g.w_b.data, &g.b_b})
            for (double& x : *v) x *= s;
    }
}

void step_block(std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g,
                double momentum, double lr) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum * v[i] + g[i];
        p[i] -= lr * v[i];
    }
}

} // namespace

void sgd_step(TrainState& state, const dgadain::DgadainGrads& grads, double lr) {
    check_finite(grads.w_s.data, "w_s", state.episode);
    check_finite(grads.b_s, "b_s", state.episode);
    check_finite(grads.w_b.data, "w_b", state.episode);
    check_finite(grads.b_b, "b_b", state.episode);

    dgadain::DgadainGrads g = grads;
    if (state.grad_clip > 0.0)
        clip_grads(g, state.grad_clip);

    step_block(state.params.w_s.data, state.velocity.w_s.data, g.w_s.data, state.momentum, lr);
    step_block(state.params.b_s, state.velocity.b_s, g.b_s, state.momentum, lr);
    step_block(state.params.w_b.data, state.velocity.w_b.data, g.w_b.data, state.momentum, lr);
    step_block(state.params.b_b, state.velocity.b_b, g.b_b, state.momentum, lr);
    ++state.updates;

    for (const auto* v : {&state.params.w_s.data, &state.params.b_s, &state.params.w_b.data,
                          &state.params.b_b})
        for (double x : *v)
            if (!std::isfinite(x))
                throw NumericError("sgd_step: non-finite parameter after update at episode " +
                                   std::to_string(state.episode));
}

void train_episode(TrainState& state, const featurestore::Dataset& ds,
                   const sampler::Episode& episode, const TrainConfig& config, double lr,
                   std::vector<LogEntry>& log) {
    const std::size_t n_pairs = episode.query.pairs.size();
    dgadain::PoolOptions pool{config.per_frame_norm};

    dgadain::DgadainGrads accumulated = dgadain::zero_grads(state.params, 0, 0);

    for (std::size_t j = 0; j < n_pairs; ++j) {
        classifier::EpisodeFeatures ef;
        ef.n_way = episode.n_way;
        ef.k_shot = episode.k_shot;
        ef.true_slot = episode.query.slot;

        std::vector<embed::EmbedContext> contexts;
        contexts.reserve(episode.support.size() + 1);
        for (const auto& sv : episode.support) {
            const auto& rec = ds.records[sv.record_index];
            const auto& pair = sv.pairs[j];
            auto ctx = embed::embed_forward(config.mode, state.params,
                                            embed::gather_clip(rec.rgb, pair.rgb_plan),
                                            embed::gather_clip(rec.depth, pair.depth_plan), pool);
            ef.support.push_back(ctx.feature);
            ef.slots.push_back(sv.slot);
            contexts.push_back(std::move(ctx));
        }
        {
            const auto& rec = ds.records[episode.query.record_index];
            const auto& pair = episode.query.pairs[j];
            auto ctx = embed::embed_forward(config.mode, state.params,
                                            embed::gather_clip(rec.rgb, pair.rgb_plan),
                                            embed::gather_clip(rec.depth, pair.depth_plan), pool);
            ef.query = ctx.feature;
            contexts.push_back(std::move(ctx));
        }

        const auto res = classifier::episode_loss(ef);

        dgadain::DgadainGrads grads = dgadain::zero_grads(state.params, 0, 0);
        for (std::size_t i = 0; i < episode.support.size(); ++i)
            grads.add(embed::embed_backward(config.mode, state.params, contexts[i],
                                            res.grad_support[i]));
        grads.add(embed::embed_backward(config.mode, state.params, contexts.back(),
                                        res.grad_query));

        if (config.accumulate_pairs)
            accumulated.add(grads);
        else
            sgd_step(state, grads, lr);

        LogEntry le;
        le.epoch = state.epoch;
        le.episode = state.episode;
        le.pair = j;
        le.loss = res.loss;
        le.correct = classifier::argmax_slot(res.probs) == ef.true_slot;
        le.lr = lr;
        log.push_back(le);

        state.running_loss += res.loss;
        state.running_acc += le.correct ? 1.0 : 0.0;
    }

    if (config.accumulate_pairs)
        sgd_step(state, accumulated, lr);
}

TrainResult train(const TrainConfig& config, const featurestore::Dataset& ds) {
    config.validate();

    Rng init_rng = stream_for(config.seed, stream_tag::init);
    TrainState state;
    state.params = dgadain::init_params(ds.manifest.l, config.init, init_rng, config.eps);
    state.velocity = dgadain::init_params(ds.manifest.l, dgadain::InitScheme::identity, init_rng,
                                          config.eps);
    for (auto* v : {&state.velocity.w_s.data, &state.velocity.b_s, &state.velocity.w_b.data,
                    &state.velocity.b_b})
        std::fill(v->begin(), v->end(), 0.0);
    state.momentum = config.momentum;
    state.grad_clip = config.grad_clip;

    TrainResult result;
    sampler::EpisodeParams ep_params;
    ep_params.n_way = config.n_way;
    ep_params.k_shot = config.k_shot;
    ep_params.num_seg = config.num_seg;
    ep_params.num_f = config.num_f;
    ep_params.num_aug = config.num_aug;
    ep_params.phase = sampler::Phase::train;
    ep_params.resample_rgb = config.resample_rgb;

    if (!config.out_dir.empty())
        std::filesystem::create_directories(config.out_dir);
    std::ofstream log_file;
    if (!config.log_path.empty()) {
        log_file.open(config.log_path, std::ios::trunc);
        if (!log_file)
            throw IoError("train: cannot open log file '" + config.log_path + "'");
    }

    for (std::size_t e = 1; e <= config.epochs; ++e) {
        state.epoch = e;
        const double lr = lr_for_epoch(config, e);
        for (std::size_t i = 1; i <= config.episodes_per_epoch; ++i) {
            state.episode = i;
            const std::uint64_t global_index =
                (e - 1) * static_cast<std::uint64_t>(config.episodes_per_epoch) + (i - 1);
            Rng ep_rng = stream_for(config.seed, stream_tag::episode, global_index);
            const auto episode = sampler::sample_episode(ds, "base", ep_params, ep_rng);
            const std::size_t log_start = result.log.size();
            train_episode(state, ds, episode, config, lr, result.log);
            if (log_file)
                for (std::size_t k = log_start; k < result.log.size(); ++k)
                    log_file << format_log_entry(result.log[k]) << "\n";
        }
        if (!config.out_dir.empty()) {
            const std::string path =
                config.out_dir + "/ckpt_epoch" + std::to_string(e) + ".amfp";
            dgadain::save_checkpoint(path, state.params, &state.velocity);
        }
        if (config.val_episodes > 0 && !ds.manifest.splits.val.empty()) {
            // lightweight per-epoch validation: matched center pairs only
            sampler::EpisodeParams vp = ep_params;
            vp.phase = sampler::Phase::test;
            std::size_t correct = 0;
            for (std::size_t i = 0; i < config.val_episodes; ++i) {
                Rng vrng = stream_for(config.seed ^ 0x76616cULL, stream_tag::episode, i);
                const auto vep = sampler::sample_episode(ds, "val", vp, vrng);
                classifier::EpisodeFeatures ef;
                ef.n_way = vep.n_way;
                ef.k_shot = vep.k_shot;
                ef.true_slot = vep.query.slot;
                for (const auto& sv : vep.support) {
                    ef.support.push_back(embed::embed_episode_video(
                        config.mode, state.params, ds.records[sv.record_index], sv.pairs[0],
                        dgadain::PoolOptions{config.per_frame_norm}));
                    ef.slots.push_back(sv.slot);
                }
                ef.query = embed::embed_episode_video(
                    config.mode, state.params, ds.records[vep.query.record_index],
                    vep.query.pairs[0], dgadain::PoolOptions{config.per_frame_norm});
                const auto probs = classifier::score_query(classifier::compute_prototypes(ef),
                                                           ef.query);
                if (classifier::argmax_slot(probs) == ef.true_slot) ++correct;
            }
            result.val_accuracy.push_back(static_cast<double>(correct) /
                                          static_cast<double>(config.val_episodes));
        }
    }

    result.params = state.params;
    result.velocity = state.velocity;
    return result;
}

} // namespace amefu::trainer
