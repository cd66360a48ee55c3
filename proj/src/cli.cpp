#include "amefu/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "amefu/classifier.hpp"
#include "amefu/dgadain.hpp"
#include "amefu/embed.hpp"
#include "amefu/errors.hpp"
#include "amefu/evaluator.hpp"
#include "amefu/featurestore.hpp"
#include "amefu/numerics.hpp"
#include "amefu/sampler.hpp"
#include "amefu/trainer.hpp"

namespace amefu::cli {

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// --- gen-data ---------------------------------------------------------

struct GenDataOpts {
    featurestore::SyntheticSpec spec;
    std::string out = "synthetic.amfu";
    std::string split_counts; // "base,val,novel" override
};

int cmd_gen_data(const GenDataOpts& opts, std::ostream& out) {
    auto data = featurestore::generate_synthetic(opts.spec);
    if (!opts.split_counts.empty()) {
        std::size_t b = 0, v = 0, n = 0;
        if (std::sscanf(opts.split_counts.c_str(), "%zu,%zu,%zu", &b, &v, &n) != 3)
            throw ConfigError("--split-counts expects base,val,novel");
        if (b + v + n != opts.spec.n_classes)
            throw ConfigError("--split-counts must sum to --classes");
        data.splits = {};
        for (std::size_t c = 0; c < opts.spec.n_classes; ++c) {
            if (c < b)
                data.splits.base.insert(static_cast<std::uint32_t>(c));
            else if (c < b + v)
                data.splits.val.insert(static_cast<std::uint32_t>(c));
            else
                data.splits.novel.insert(static_cast<std::uint32_t>(c));
        }
    }
    auto manifest = featurestore::write_dataset(data.records, data.splits, opts.out);
    out << "config seed=" << opts.spec.seed << " classes=" << opts.spec.n_classes
        << " videos_per_class=" << opts.spec.videos_per_class << " frames=" << opts.spec.t
        << " feature_dim=" << opts.spec.l << " rgb_sep=" << fmt(opts.spec.rgb_sep)
        << " depth_sep=" << fmt(opts.spec.depth_sep)
        << " confusable_pairs=" << opts.spec.confusable_pairs
        << " noise_std=" << fmt(opts.spec.noise_std) << " drift_std=" << fmt(opts.spec.drift_std)
        << "\n";
    out << "wrote " << opts.out << ": " << manifest.n_videos() << " videos, L=" << manifest.l
        << ", splits base/val/novel = " << manifest.splits.base.size() << "/"
        << manifest.splits.val.size() << "/" << manifest.splits.novel.size() << "\n";
    return 0;
}

// --- train ------------------------------------------------------------

struct TrainOpts {
    trainer::TrainConfig config;
    std::string data;
    std::string init = "defaults";
    std::string mode = "dgadain";
    bool episodes_explicit = false;
};

void echo_train_config(const trainer::TrainConfig& c, std::ostream& out) {
    out << "config seed=" << c.seed << " n_way=" << c.n_way << " k_shot=" << c.k_shot
        << " epochs=" << c.epochs << " episodes_per_epoch=" << c.episodes_per_epoch
        << " lr=" << fmt(c.lr) << " momentum=" << fmt(c.momentum)
        << " lr_decay_factor=" << fmt(c.lr_decay_factor)
        << " lr_decay_after_epochs=" << c.lr_decay_after_epochs << " num_seg=" << c.num_seg
        << " num_f=" << c.num_f << " num_aug=" << c.num_aug << " eps=" << fmt(c.eps)
        << " init=" << (c.init == dgadain::InitScheme::identity ? "identity" : "defaults")
        << " mode=" << embed::mode_to_string(c.mode) << " resample_rgb=" << c.resample_rgb
        << " per_frame_norm=" << c.per_frame_norm << " accumulate_pairs=" << c.accumulate_pairs
        << " grad_clip=" << fmt(c.grad_clip) << "\n";
}

int cmd_train(TrainOpts& opts, std::ostream& out) {
    auto ds = featurestore::load_dataset(opts.data);

    opts.config.init = opts.init == "identity" ? dgadain::InitScheme::identity
                                               : dgadain::InitScheme::defaults;
    opts.config.mode = embed::mode_from_string(opts.mode);

    // desk-scale datasets do not support 2000 episodes/epoch of fresh data;
    // shrink unless the caller pinned the count explicitly
    std::size_t base_videos = 0;
    for (std::uint32_t c : ds.manifest.splits.base) {
        auto it = ds.by_class.find(c);
        if (it != ds.by_class.end()) base_videos += it->second.size();
    }
    if (!opts.episodes_explicit && base_videos <= 1000 &&
        opts.config.episodes_per_epoch == 2000) {
        opts.config.episodes_per_epoch = 200;
        out << "note: small dataset (" << base_videos
            << " base videos), episodes_per_epoch shrunk to 200\n";
    }

    if (opts.config.log_path.empty() && !opts.config.out_dir.empty())
        opts.config.log_path = opts.config.out_dir + "/train.log";

    echo_train_config(opts.config, out);
    auto result = trainer::train(opts.config, ds);

    double loss_sum = 0.0, correct = 0.0;
    for (const auto& e : result.log) {
        loss_sum += e.loss;
        correct += e.correct ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(result.log.size());
    out << "trained " << opts.config.epochs << " epochs x " << opts.config.episodes_per_epoch
        << " episodes; mean pair loss=" << fmt(loss_sum / n)
        << " train_acc=" << fmt(correct / n) << "\n";
    for (std::size_t i = 0; i < result.val_accuracy.size(); ++i)
        out << "val epoch=" << (i + 1) << " acc=" << fmt(result.val_accuracy[i]) << "\n";
    if (!opts.config.out_dir.empty())
        out << "checkpoint " << opts.config.out_dir << "/ckpt_epoch" << opts.config.epochs
            << ".amfp\n";
    return 0;
}

// --- eval -------------------------------------------------------------

struct EvalOpts {
    evaluator::EvalConfig config;
    std::string data;
    std::string checkpoint;
    std::string mode = "dgadain";
    std::string csv_out;
};

int cmd_eval(EvalOpts& opts, std::ostream& out) {
    auto ds = featurestore::load_dataset(opts.data);
    opts.config.mode = embed::mode_from_string(opts.mode);

    dgadain::DgadainParams params;
    if (!opts.checkpoint.empty()) {
        params = dgadain::load_checkpoint(opts.checkpoint);
        if (params.l != ds.manifest.l)
            throw FormatError("checkpoint width " + std::to_string(params.l) +
                              " does not match dataset width " +
                              std::to_string(ds.manifest.l));
    } else {
        Rng rng(0);
        params = dgadain::init_params(ds.manifest.l, dgadain::InitScheme::identity, rng);
        if (embed::mode_has_params(opts.config.mode))
            out << "note: no checkpoint given, using identity parameters\n";
    }

    out << "config seed=" << opts.config.seed << " mode=" << opts.mode
        << " split=" << opts.config.split << " n_way=" << opts.config.n_way
        << " k_shot=" << opts.config.k_shot << " episodes=" << opts.config.episodes
        << " threads=" << opts.config.threads
        << " shifted_depth_probe=" << opts.config.shifted_depth_probe
        << " per_frame_norm=" << opts.config.per_frame_norm << "\n";

    const auto report = evaluator::evaluate(params, ds, opts.config);
    out << report.result_line() << "\n";
    for (const auto& [cls, counts] : report.per_class) {
        out << "class " << cls << ": " << counts.first << "/" << counts.second << "\n";
    }
    if (!opts.csv_out.empty()) {
        std::ofstream os(opts.csv_out, std::ios::trunc);
        if (!os)
            throw IoError("eval: cannot open '" + opts.csv_out + "'");
        char buf[160];
        std::snprintf(buf, sizeof(buf), "mode,n_way,k_shot,episodes,acc,ci95\n%s,%zu,%zu,%zu,%.6f,%.6f\n",
                      report.mode.c_str(), report.n_way, report.k_shot, report.episodes,
                      report.accuracy, report.ci95);
        os << buf;
    }
    return 0;
}

// --- gradcheck --------------------------------------------------------

struct GradcheckOpts {
    std::uint64_t seed = 0;
    std::size_t seeds = 20;
    double h = 1e-5;
};

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

Batch3 random_batch(std::size_t b, std::size_t d, std::size_t l, Rng& rng) {
    Batch3 out(b, d, l);
    for (double& v : out.data) v = rng.normal();
    return out;
}

// worst normalized error of the six module-level gradients under the loss
// 0.5*|fused|^2
std::map<std::string, double> module_gradcheck(std::uint64_t seed, double h) {
    Rng rng(seed);
    const std::size_t B = 2, D = 3, L = 5;
    auto params = dgadain::init_params(L, dgadain::InitScheme::defaults, rng);
    const Batch3 i_rgb = random_batch(B, D, L, rng);
    const Batch3 i_d = random_batch(B, D, L, rng);

    auto loss_of = [&](const dgadain::DgadainParams& p, const Batch3& rgb, const Batch3& dep) {
        const Batch3 fused = dgadain::forward(p, rgb, dep).first;
        double acc = 0.0;
        for (double v : fused.data) acc += 0.5 * v * v;
        return acc;
    };

    auto [fused, cache] = dgadain::forward(params, i_rgb, i_d);
    const auto grads = dgadain::backward(params, cache, fused); // dL/dfused = fused

    std::map<std::string, double> worst;
    // parameters
    {
        const auto flat = dgadain::flatten_params(params);
        const auto analytic = dgadain::flatten_grads(grads);
        auto f = [&](std::span<const double> p) {
            dgadain::DgadainParams tmp = params;
            dgadain::unflatten_params(tmp, p);
            return loss_of(tmp, i_rgb, i_d);
        };
        const auto numeric = numerics::finite_diff_grad(f, flat, h);
        const std::size_t n = L * L;
        const char* names[4] = {"w_s", "b_s", "w_b", "b_b"};
        const std::size_t sizes[4] = {n, L, n, L};
        std::size_t pos = 0;
        for (int blk = 0; blk < 4; ++blk) {
            double w = 0.0;
            for (std::size_t i = 0; i < sizes[blk]; ++i)
                w = std::max(w, rel_err(analytic[pos + i], numeric[pos + i]));
            worst[names[blk]] = std::max(worst[names[blk]], w);
            pos += sizes[blk];
        }
    }
    // inputs
    for (int which = 0; which < 2; ++which) {
        const Batch3& target = which == 0 ? i_rgb : i_d;
        const auto& analytic = which == 0 ? grads.i_rgb.data : grads.i_d.data;
        auto f = [&](std::span<const double> p) {
            Batch3 tmp = target;
            std::copy(p.begin(), p.end(), tmp.data.begin());
            return which == 0 ? loss_of(params, tmp, i_d) : loss_of(params, i_rgb, tmp);
        };
        const auto numeric = numerics::finite_diff_grad(f, target.data, h);
        double w = 0.0;
        for (std::size_t i = 0; i < numeric.size(); ++i)
            w = std::max(w, rel_err(analytic[i], numeric[i]));
        worst[which == 0 ? "i_rgb" : "i_d"] = w;
    }
    return worst;
}

// worst error of the episode-loss gradients w.r.t. query and support vectors
double classifier_gradcheck(std::uint64_t seed, double h) {
    Rng rng(seed);
    const std::size_t n_way = 5, l = 8;
    classifier::EpisodeFeatures ef;
    ef.n_way = n_way;
    ef.k_shot = 1;
    ef.true_slot = rng.uniform_below(n_way);
    for (std::size_t s = 0; s < n_way; ++s) {
        std::vector<double> v(l);
        for (double& x : v) x = rng.normal();
        ef.support.push_back(numerics::l2_normalize(v));
        ef.slots.push_back(s);
    }
    std::vector<double> q(l);
    for (double& x : q) x = rng.normal();
    ef.query = numerics::l2_normalize(q);

    const auto res = classifier::episode_loss(ef);
    double worst = 0.0;

    auto fq = [&](std::span<const double> p) {
        classifier::EpisodeFeatures tmp = ef;
        tmp.query.assign(p.begin(), p.end());
        return classifier::episode_loss(tmp).loss;
    };
    const auto nq = numerics::finite_diff_grad(fq, ef.query, h);
    for (std::size_t i = 0; i < nq.size(); ++i)
        worst = std::max(worst, rel_err(res.grad_query[i], nq[i]));

    for (std::size_t s = 0; s < ef.support.size(); ++s) {
        auto fs = [&](std::span<const double> p) {
            classifier::EpisodeFeatures tmp = ef;
            tmp.support[s].assign(p.begin(), p.end());
            return classifier::episode_loss(tmp).loss;
        };
        const auto ns = numerics::finite_diff_grad(fs, ef.support[s], h);
        for (std::size_t i = 0; i < ns.size(); ++i)
            worst = std::max(worst, rel_err(res.grad_support[s][i], ns[i]));
    }
    return worst;
}

// full chain: episode loss through pooling and fusion, gradients w.r.t. the
// four parameter blocks
std::map<std::string, double> chain_gradcheck(std::uint64_t seed, double h,
                                              embed::Mode mode = embed::Mode::dgadain) {
    Rng rng(seed);
    const std::size_t n_way = 2, D = 3, L = 5;
    auto params = dgadain::init_params(L, dgadain::InitScheme::defaults, rng);

    struct Video {
        Matrix rgb, depth;
    };
    std::vector<Video> videos(n_way + 1);
    for (auto& v : videos) {
        v.rgb = Matrix(D, L);
        v.depth = Matrix(D, L);
        for (double& x : v.rgb.data) x = rng.normal();
        for (double& x : v.depth.data) x = rng.normal();
    }
    const std::size_t true_slot = rng.uniform_below(n_way);

    auto loss_of = [&](const dgadain::DgadainParams& p) {
        classifier::EpisodeFeatures ef;
        ef.n_way = n_way;
        ef.k_shot = 1;
        ef.true_slot = true_slot;
        for (std::size_t s = 0; s < n_way; ++s) {
            ef.support.push_back(embed::embed_video(mode, p, videos[s].rgb, videos[s].depth));
            ef.slots.push_back(s);
        }
        ef.query = embed::embed_video(mode, p, videos[n_way].rgb, videos[n_way].depth);
        return classifier::episode_loss(ef).loss;
    };

    // analytic: forward with contexts, classifier grads, embed backward
    classifier::EpisodeFeatures ef;
    ef.n_way = n_way;
    ef.k_shot = 1;
    ef.true_slot = true_slot;
    std::vector<embed::EmbedContext> ctxs;
    for (std::size_t s = 0; s < n_way; ++s) {
        ctxs.push_back(embed::embed_forward(mode, params, videos[s].rgb, videos[s].depth));
        ef.support.push_back(ctxs.back().feature);
        ef.slots.push_back(s);
    }
    ctxs.push_back(embed::embed_forward(mode, params, videos[n_way].rgb, videos[n_way].depth));
    ef.query = ctxs.back().feature;
    const auto res = classifier::episode_loss(ef);

    dgadain::DgadainGrads grads = dgadain::zero_grads(params, 0, 0);
    for (std::size_t s = 0; s < n_way; ++s)
        grads.add(embed::embed_backward(mode, params, ctxs[s], res.grad_support[s]));
    grads.add(embed::embed_backward(mode, params, ctxs[n_way], res.grad_query));

    const auto analytic = dgadain::flatten_grads(grads);
    const auto flat = dgadain::flatten_params(params);
    auto f = [&](std::span<const double> p) {
        dgadain::DgadainParams tmp = params;
        dgadain::unflatten_params(tmp, p);
        return loss_of(tmp);
    };
    const auto numeric = numerics::finite_diff_grad(f, flat, h);

    std::map<std::string, double> worst;
    const std::size_t n = L * L;
    const char* names[4] = {"w_s", "b_s", "w_b", "b_b"};
    const std::size_t sizes[4] = {n, L, n, L};
    std::size_t pos = 0;
    for (int blk = 0; blk < 4; ++blk) {
        double w = 0.0;
        for (std::size_t i = 0; i < sizes[blk]; ++i)
            w = std::max(w, rel_err(analytic[pos + i], numeric[pos + i]));
        worst[names[blk]] = w;
        pos += sizes[blk];
    }
    return worst;
}

int cmd_gradcheck(const GradcheckOpts& opts, std::ostream& out) {
    out << "config seed=" << opts.seed << " seeds=" << opts.seeds << " h=" << fmt(opts.h)
        << "\n";
    const bool thresholds = opts.h == 1e-5;
    if (!thresholds)
        out << "warning: h != 1e-5, diagnostic mode, threshold check skipped\n";

    std::map<std::string, double> worst;
    for (std::size_t i = 0; i < opts.seeds; ++i) {
        const std::uint64_t s = opts.seed + i;
        for (const auto& [name, err] : module_gradcheck(s, opts.h))
            worst["module." + name] = std::max(worst["module." + name], err);
        worst["classifier.features"] =
            std::max(worst["classifier.features"], classifier_gradcheck(s, opts.h));
        for (const auto& [name, err] : chain_gradcheck(s, opts.h))
            worst["chain." + name] = std::max(worst["chain." + name], err);
    }

    bool ok = true;
    for (const auto& [name, err] : worst) {
        const bool pass = err < 1e-6;
        ok = ok && pass;
        out << name << " worst_rel_err=" << fmt(err);
        if (thresholds)
            out << (pass ? " PASS" : " FAIL");
        out << "\n";
    }
    if (!thresholds)
        return 0;
    if (!ok)
        out << "gradcheck failed at base seed " << opts.seed << "\n";
    return ok ? 0 : 1;
}

// --- ablate -----------------------------------------------------------

struct AblateOpts {
    std::string data;
    std::vector<std::string> axes;
    std::string csv_out;
    trainer::TrainConfig train;
    evaluator::EvalConfig eval;
    std::string mode = "dgadain";
    std::string init = "defaults";
    bool episodes_explicit = false;
};

int cmd_ablate(AblateOpts& opts, std::ostream& out) {
    auto ds = featurestore::load_dataset(opts.data);
    opts.train.mode = embed::mode_from_string(opts.mode);
    opts.train.init = opts.init == "identity" ? dgadain::InitScheme::identity
                                              : dgadain::InitScheme::defaults;
    opts.eval.mode = opts.train.mode;
    opts.eval.seed = opts.train.seed;

    std::size_t base_videos = 0;
    for (std::uint32_t c : ds.manifest.splits.base) {
        auto it = ds.by_class.find(c);
        if (it != ds.by_class.end()) base_videos += it->second.size();
    }
    if (!opts.episodes_explicit && base_videos <= 1000 &&
        opts.train.episodes_per_epoch == 2000) {
        opts.train.episodes_per_epoch = 200;
        out << "note: small dataset (" << base_videos
            << " base videos), episodes_per_epoch shrunk to 200\n";
    }

    evaluator::AblateAxes axes;
    for (const auto& spec : opts.axes) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--axis expects name=v1,v2,... got '" + spec + "'");
        const std::string name = spec.substr(0, eq);
        std::istringstream vals(spec.substr(eq + 1));
        std::string tok;
        while (std::getline(vals, tok, ',')) {
            if (tok.empty()) continue;
            if (name == "mode") {
                axes.modes.push_back(embed::mode_from_string(tok));
            } else if (name == "num_aug") {
                axes.num_augs.push_back(static_cast<std::size_t>(std::stoul(tok)));
            } else if (name == "k_shot") {
                axes.k_shots.push_back(static_cast<std::size_t>(std::stoul(tok)));
            } else {
                throw ConfigError("--axis name must be mode, num_aug or k_shot, got '" + name +
                                  "'");
            }
        }
    }

    out << "config seed=" << opts.train.seed << " episodes=" << opts.eval.episodes
        << " split=" << opts.eval.split << " n_way=" << opts.eval.n_way << "\n";
    const auto cells = evaluator::ablate(ds, opts.train, opts.eval, axes);
    const std::string csv = evaluator::ablate_csv(cells);
    out << csv;
    if (!opts.csv_out.empty()) {
        std::ofstream os(opts.csv_out, std::ios::trunc);
        if (!os)
            throw IoError("ablate: cannot open '" + opts.csv_out + "'");
        os << csv;
    }
    return 0;
}

// Flat key=value config support: values become trailing arguments for any
// key the command line does not already set, so flags take precedence.
std::vector<std::string> apply_config_file(const std::vector<std::string>& args) {
    std::string path;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size())
                throw ConfigError("--config expects a path");
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            out.push_back(args[i]);
        }
    }
    if (path.empty())
        return out;

    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open config file '" + path + "'");
    auto already_set = [&](const std::string& key) {
        const std::string flag = "--" + key;
        for (const auto& a : out)
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed;
        for (char ch : line)
            if (ch != ' ' && ch != '\t') trimmed += ch;
        if (trimmed.empty() || trimmed[0] == '#')
            continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("config file " + path + ":" + std::to_string(lineno) +
                              ": expected key=value");
        const std::string key = trimmed.substr(0, eq);
        const std::string value = trimmed.substr(eq + 1);
        if (already_set(key))
            continue;
        if (value == "true" || value == "false") {
            if (value == "true") out.push_back("--" + key);
        } else {
            out.push_back("--" + key);
            out.push_back(value);
        }
    }
    return out;
}

void add_train_options(CLI::App* cmd, trainer::TrainConfig& c, std::string& mode,
                       std::string& init) {
    cmd->add_option("--n-way", c.n_way, "episode classes")->capture_default_str();
    cmd->add_option("--k-shot", c.k_shot, "support videos per class")->capture_default_str();
    cmd->add_option("--epochs", c.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--lr", c.lr, "learning rate")->capture_default_str();
    cmd->add_option("--momentum", c.momentum, "SGD momentum")->capture_default_str();
    cmd->add_option("--lr-decay-factor", c.lr_decay_factor, "multiplicative lr decay")
        ->capture_default_str();
    cmd->add_option("--lr-decay-after-epochs", c.lr_decay_after_epochs,
                    "decay period in epochs, 0 = no decay")
        ->capture_default_str();
    cmd->add_option("--num-seg", c.num_seg, "segments per clip")->capture_default_str();
    cmd->add_option("--num-f", c.num_f, "consecutive frames per segment")->capture_default_str();
    cmd->add_option("--num-aug", c.num_aug, "extra asynchronized pairs per video")
        ->capture_default_str();
    cmd->add_option("--eps", c.eps, "variance floor inside the normalization sqrt")
        ->capture_default_str();
    cmd->add_option("--mode", mode, "embedding mode (dgadain|rgb_guide_depth|two_way)")
        ->capture_default_str();
    cmd->add_option("--init", init, "parameter init (defaults|identity)")->capture_default_str();
    cmd->add_flag("--resample-rgb", c.resample_rgb,
                  "augmented pairs redraw RGB offsets too");
    cmd->add_flag("--per-frame-norm", c.per_frame_norm,
                  "L2-normalize each fused frame before pooling");
    cmd->add_flag("--accumulate-pairs", c.accumulate_pairs,
                  "one update per episode instead of per pair");
    cmd->add_option("--grad-clip", c.grad_clip, "max gradient norm, 0 = off")
        ->capture_default_str();
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"few-shot video recognition over precomputed two-stream features"};
    app.require_subcommand(1);
    // gradcheck's --h step flag needs the short -h released
    app.set_help_flag("--help", "print help");

    GenDataOpts gen;
    gen.spec.confusable_pairs = 5;
    gen.spec.noise_std = 0.5;
    gen.spec.drift_std = 0.05;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic two-stream dataset");
    gen_cmd->set_help_flag("--help", "print help");
    gen_cmd->add_option("--config", "flat key=value config file; flags take precedence");
    gen_cmd->add_option("--out", gen.out, "output dataset path")->capture_default_str();
    gen_cmd->add_option("--classes", gen.spec.n_classes, "number of classes")
        ->capture_default_str();
    gen_cmd->add_option("--videos-per-class", gen.spec.videos_per_class, "videos per class")
        ->capture_default_str();
    gen_cmd->add_option("--frames", gen.spec.t, "frames per video")->capture_default_str();
    gen_cmd->add_option("--feature-dim", gen.spec.l, "feature width")->capture_default_str();
    gen_cmd->add_option("--rgb-sep", gen.spec.rgb_sep, "class-mean separation in RGB space")
        ->capture_default_str();
    gen_cmd->add_option("--depth-sep", gen.spec.depth_sep, "class-mean separation in depth space")
        ->capture_default_str();
    gen_cmd->add_option("--confusable-pairs", gen.spec.confusable_pairs,
                        "class pairs sharing an RGB mean")
        ->capture_default_str();
    gen_cmd->add_option("--noise-std", gen.spec.noise_std, "per-frame noise std")
        ->capture_default_str();
    gen_cmd->add_option("--drift-std", gen.spec.drift_std, "per-frame drift increment std")
        ->capture_default_str();
    gen_cmd->add_option("--seed", gen.spec.seed, "generator seed")
        ->envname("AMEFU_SEED")
        ->capture_default_str();
    gen_cmd->add_option("--split-counts", gen.split_counts,
                        "override class split sizes as base,val,novel");

    TrainOpts tr;
    tr.config.out_dir = "runs/train";
    auto* train_cmd = app.add_subcommand("train", "meta-train the fusion module");
    train_cmd->set_help_flag("--help", "print help");
    train_cmd->add_option("--config", "flat key=value config file; flags take precedence");
    train_cmd->add_option("--data", tr.data, "dataset path")->required();
    train_cmd->add_option("--out", tr.config.out_dir, "checkpoint directory")
        ->capture_default_str();
    train_cmd->add_option("--log", tr.config.log_path, "training log path");
    auto* epe = train_cmd
                    ->add_option("--episodes-per-epoch", tr.config.episodes_per_epoch,
                                 "episodes per epoch")
                    ->capture_default_str();
    train_cmd->add_option("--seed", tr.config.seed, "run seed")
        ->envname("AMEFU_SEED")
        ->capture_default_str();
    train_cmd->add_option("--val-episodes", tr.config.val_episodes,
                          "validation episodes per epoch, 0 = off")
        ->capture_default_str();
    add_train_options(train_cmd, tr.config, tr.mode, tr.init);

    EvalOpts ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate on many test episodes");
    eval_cmd->set_help_flag("--help", "print help");
    eval_cmd->add_option("--config", "flat key=value config file; flags take precedence");
    eval_cmd->add_option("--data", ev.data, "dataset path")->required();
    eval_cmd->add_option("--checkpoint", ev.checkpoint,
                         "trained checkpoint (optional for baseline modes)");
    eval_cmd->add_option("--mode", ev.mode,
                         "embedding mode (dgadain|rgb_only|concat|rgb_guide_depth|two_way)")
        ->capture_default_str();
    eval_cmd->add_option("--episodes", ev.config.episodes, "test episodes")
        ->capture_default_str();
    eval_cmd->add_option("--n-way", ev.config.n_way, "episode classes")->capture_default_str();
    eval_cmd->add_option("--k-shot", ev.config.k_shot, "support videos per class")
        ->capture_default_str();
    eval_cmd->add_option("--split", ev.config.split, "dataset split (base|val|novel)")
        ->capture_default_str();
    eval_cmd->add_option("--seed", ev.config.seed, "run seed")
        ->envname("AMEFU_SEED")
        ->capture_default_str();
    eval_cmd->add_option("--num-seg", ev.config.num_seg, "segments per clip")
        ->capture_default_str();
    eval_cmd->add_option("--num-f", ev.config.num_f, "consecutive frames per segment")
        ->capture_default_str();
    eval_cmd->add_option("--threads", ev.config.threads, "worker threads")
        ->capture_default_str();
    eval_cmd->add_flag("--shifted-depth-probe", ev.config.shifted_depth_probe,
                       "randomize depth clip offsets at test time");
    eval_cmd->add_flag("--per-frame-norm", ev.config.per_frame_norm,
                       "L2-normalize each fused frame before pooling");
    eval_cmd->add_option("--out", ev.csv_out, "write a one-row CSV report here");

    GradcheckOpts gc;
    auto* gc_cmd = app.add_subcommand("gradcheck",
                                      "verify analytic gradients against finite differences");
    gc_cmd->set_help_flag("--help", "print help");
    gc_cmd->add_option("--config", "flat key=value config file; flags take precedence");
    gc_cmd->add_option("--seed", gc.seed, "base seed")
        ->envname("AMEFU_SEED")
        ->capture_default_str();
    gc_cmd->add_option("--seeds", gc.seeds, "number of random instances")->capture_default_str();
    gc_cmd->add_option("--h", gc.h, "finite-difference step")->capture_default_str();

    AblateOpts ab;
    auto* ab_cmd = app.add_subcommand("ablate", "sweep fusion modes, num_aug or k_shot");
    ab_cmd->set_help_flag("--help", "print help");
    ab_cmd->add_option("--config", "flat key=value config file; flags take precedence");
    ab_cmd->add_option("--data", ab.data, "dataset path")->required();
    ab_cmd->add_option("--axis", ab.axes, "axis spec, e.g. mode=dgadain,concat or num_aug=0,2")
        ->expected(1)
        ->allow_extra_args(false);
    ab_cmd->add_option("--out", ab.csv_out, "CSV output path");
    ab_cmd->add_option("--episodes", ab.eval.episodes, "test episodes per cell")
        ->capture_default_str();
    ab_cmd->add_option("--split", ab.eval.split, "evaluation split")->capture_default_str();
    ab_cmd->add_option("--seed", ab.train.seed, "run seed")
        ->envname("AMEFU_SEED")
        ->capture_default_str();
    ab_cmd->add_option("--threads", ab.eval.threads, "worker threads")->capture_default_str();
    auto* ab_epe = ab_cmd
                       ->add_option("--episodes-per-epoch", ab.train.episodes_per_epoch,
                                    "training episodes per epoch")
                       ->capture_default_str();
    ab_cmd->add_option("--epochs", ab.train.epochs, "training epochs")->capture_default_str();
    ab_cmd->add_option("--lr", ab.train.lr, "learning rate")->capture_default_str();
    ab_cmd->add_option("--n-way", ab.eval.n_way, "episode classes")->capture_default_str();
    ab_cmd->add_option("--mode", ab.mode, "base embedding mode")->capture_default_str();
    ab_cmd->add_option("--num-aug", ab.train.num_aug, "base augmented pair count")
        ->capture_default_str();

    std::vector<std::string> expanded;
    try {
        expanded = apply_config_file(args);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        std::vector<const char*> argv;
        argv.push_back("amefu");
        for (const auto& a : expanded) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        for (const auto* sub : app.get_subcommands({}))
            if (sub->count_all() > 0) out << sub->help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return 2;
    }

    try {
        if (gen_cmd->parsed()) {
            return cmd_gen_data(gen, out);
        } else if (train_cmd->parsed()) {
            tr.episodes_explicit = epe->count() > 0;
            return cmd_train(tr, out);
        } else if (eval_cmd->parsed()) {
            return cmd_eval(ev, out);
        } else if (gc_cmd->parsed()) {
            return cmd_gradcheck(gc, out);
        } else if (ab_cmd->parsed()) {
            ab.episodes_explicit = ab_epe->count() > 0;
            return cmd_ablate(ab, out);
        }
        err << "error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace amefu::cli
