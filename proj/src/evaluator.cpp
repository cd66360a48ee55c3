#include "amefu/evaluator.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "amefu/classifier.hpp"
#include "amefu/numerics.hpp"
#include "amefu/sampler.hpp"

namespace amefu::evaluator {

void EvalConfig::validate() const {
    if (episodes < 1)
        throw ConfigError("eval config: episodes must be >= 1");
    if (n_way < 1 || k_shot < 1)
        throw ConfigError("eval config: n_way and k_shot must be >= 1");
    if (threads < 1)
        throw ConfigError("eval config: threads must be >= 1");
}

std::string EvalReport::result_line() const {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "result mode=%s n_way=%zu k_shot=%zu episodes=%zu acc=%.6f ci95=%.6f",
                  mode.c_str(), n_way, k_shot, episodes, accuracy, ci95);
    return buf;
}

namespace {

struct EpisodeOutcome {
    std::size_t true_slot = 0;
    std::size_t pred_slot = 0;
    std::uint32_t true_class = 0;
};

EpisodeOutcome run_episode(const dgadain::DgadainParams& params, const featurestore::Dataset& ds,
                           const EvalConfig& config, std::uint64_t index) {
    Rng rng = stream_for(config.seed, stream_tag::episode, index);
    sampler::EpisodeParams ep_params;
    ep_params.n_way = config.n_way;
    ep_params.k_shot = config.k_shot;
    ep_params.num_seg = config.num_seg;
    ep_params.num_f = config.num_f;
    ep_params.phase = sampler::Phase::test;
    auto ep = sampler::sample_episode(ds, config.split, ep_params, rng);

    if (config.shifted_depth_probe) {
        // keep the centered RGB clip, redraw depth offsets at random
        auto shift = [&](sampler::EpisodeVideo& v) {
            const std::size_t t = ds.records[v.record_index].t;
            for (auto& pair : v.pairs) {
                pair.depth_plan = sampler::sample_clip(t, config.num_seg, config.num_f,
                                                       sampler::ClipMode::random, rng);
                pair.matched = pair.rgb_plan.same_offsets(pair.depth_plan);
            }
        };
        for (auto& v : ep.support) shift(v);
        shift(ep.query);
    }

    dgadain::PoolOptions pool{config.per_frame_norm};
    classifier::EpisodeFeatures ef;
    ef.n_way = ep.n_way;
    ef.k_shot = ep.k_shot;
    ef.true_slot = ep.query.slot;
    for (const auto& sv : ep.support) {
        ef.support.push_back(embed::embed_episode_video(config.mode, params,
                                                        ds.records[sv.record_index], sv.pairs[0],
                                                        pool));
        ef.slots.push_back(sv.slot);
    }
    ef.query = embed::embed_episode_video(config.mode, params,
                                          ds.records[ep.query.record_index], ep.query.pairs[0],
                                          pool);

    const auto probs = classifier::score_query(classifier::compute_prototypes(ef), ef.query);

    EpisodeOutcome out;
    out.true_slot = ef.true_slot;
    out.pred_slot = classifier::argmax_slot(probs);
    out.true_class = ds.records[ep.query.record_index].class_id;
    return out;
}

} // namespace

EvalReport evaluate(const dgadain::DgadainParams& params, const featurestore::Dataset& ds,
                    const EvalConfig& config) {
    config.validate();

    std::vector<EpisodeOutcome> outcomes(config.episodes);
    if (config.threads == 1) {
        for (std::size_t i = 0; i < config.episodes; ++i)
            outcomes[i] = run_episode(params, ds, config, i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= config.episodes) return;
                outcomes[i] = run_episode(params, ds, config, i);
            }
        };
        std::vector<std::thread> pool;
        const std::size_t n = std::min<std::size_t>(config.threads, config.episodes);
        pool.reserve(n);
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    EvalReport report;
    report.mode = embed::mode_to_string(config.mode);
    report.n_way = config.n_way;
    report.k_shot = config.k_shot;
    report.episodes = config.episodes;
    report.confusion.assign(config.n_way, std::vector<std::size_t>(config.n_way, 0));
    for (const auto& o : outcomes) {
        if (o.pred_slot == o.true_slot) ++report.correct;
        ++report.confusion[o.true_slot][o.pred_slot];
        auto& pc = report.per_class[o.true_class];
        if (o.pred_slot == o.true_slot) ++pc.first;
        ++pc.second;
    }
    report.accuracy = static_cast<double>(report.correct) / static_cast<double>(config.episodes);
    report.ci95 = 1.96 * std::sqrt(report.accuracy * (1.0 - report.accuracy) /
                                   static_cast<double>(config.episodes));
    return report;
}

std::vector<AblateCell> ablate(const featurestore::Dataset& ds,
                               const trainer::TrainConfig& train_base,
                               const EvalConfig& eval_base, const AblateAxes& axes) {
    const std::vector<embed::Mode> modes =
        axes.modes.empty() ? std::vector<embed::Mode>{eval_base.mode} : axes.modes;
    const std::vector<std::size_t> num_augs =
        axes.num_augs.empty() ? std::vector<std::size_t>{train_base.num_aug} : axes.num_augs;
    const std::vector<std::size_t> k_shots =
        axes.k_shots.empty() ? std::vector<std::size_t>{eval_base.k_shot} : axes.k_shots;
    const bool probe = !axes.num_augs.empty();

    // one trained checkpoint per distinct (mode, num_aug); baselines train
    // nothing
    std::map<std::pair<std::string, std::size_t>, dgadain::DgadainParams> trained;
    auto params_for = [&](embed::Mode mode, std::size_t num_aug) -> const dgadain::DgadainParams& {
        const auto key = std::make_pair(embed::mode_to_string(mode), num_aug);
        auto it = trained.find(key);
        if (it == trained.end()) {
            trainer::TrainConfig tc = train_base;
            tc.mode = mode;
            tc.num_aug = num_aug;
            it = trained.emplace(key, trainer::train(tc, ds).params).first;
        }
        return it->second;
    };

    Rng dummy_rng(0);
    const dgadain::DgadainParams identity =
        dgadain::init_params(ds.manifest.l, dgadain::InitScheme::identity, dummy_rng,
                             train_base.eps);

    std::vector<AblateCell> cells;
    for (embed::Mode mode : modes) {
        for (std::size_t num_aug : num_augs) {
            const dgadain::DgadainParams& params =
                embed::mode_has_params(mode) ? params_for(mode, num_aug) : identity;
            for (std::size_t k_shot : k_shots) {
                EvalConfig ec = eval_base;
                ec.mode = mode;
                ec.k_shot = k_shot;
                ec.shifted_depth_probe = probe || eval_base.shifted_depth_probe;
                AblateCell cell;
                cell.mode = mode;
                cell.num_aug = num_aug;
                cell.k_shot = k_shot;
                cell.report = evaluate(params, ds, ec);
                cells.push_back(std::move(cell));
            }
        }
    }
    return cells;
}

std::string ablate_csv(const std::vector<AblateCell>& cells) {
    std::ostringstream os;
    os << "mode,num_aug,k_shot,episodes,acc,ci95\n";
    for (const auto& c : cells) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%.6f,%.6f\n",
                      embed::mode_to_string(c.mode).c_str(), c.num_aug, c.k_shot,
                      c.report.episodes, c.report.accuracy, c.report.ci95);
        os << buf;
    }
    return os.str();
}

} // namespace amefu::evaluator
