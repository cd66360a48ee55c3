#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "amefu/evaluator.hpp"
#include "testutil.hpp"

using namespace amefu;
using namespace amefu::evaluator;

namespace {

featurestore::Dataset synthetic(std::uint64_t seed, double rgb_sep, double depth_sep,
                                std::size_t pairs, double noise, std::size_t l = 12,
                                std::size_t vpc = 8, double drift = 0.0,
                                std::size_t t = 16) {
    featurestore::SyntheticSpec spec;
    spec.n_classes = 10;
    spec.videos_per_class = vpc;
    spec.t = t;
    spec.l = l;
    spec.rgb_sep = rgb_sep;
    spec.depth_sep = depth_sep;
    spec.confusable_pairs = pairs;
    spec.noise_std = noise;
    spec.drift_std = drift;
    spec.seed = seed;
    auto data = featurestore::generate_synthetic(spec);
    return featurestore::make_dataset(std::move(data.records), std::move(data.splits));
}

dgadain::DgadainParams identity_params(const featurestore::Dataset& ds) {
    Rng rng(0);
    return dgadain::init_params(ds.manifest.l, dgadain::InitScheme::identity, rng);
}

} // namespace

TEST_CASE("rgb_only report does not depend on the parameters") {
    const auto ds = synthetic(1, 1.0, 1.0, 3, 0.3);
    EvalConfig cfg;
    cfg.mode = embed::Mode::rgb_only;
    cfg.episodes = 100;
    cfg.seed = 5;

    Rng rng(7);
    const auto params_a = identity_params(ds);
    const auto params_b = dgadain::init_params(ds.manifest.l, dgadain::InitScheme::defaults, rng);
    const auto ra = evaluate(params_a, ds, cfg);
    const auto rb = evaluate(params_b, ds, cfg);
    CHECK(ra.accuracy == rb.accuracy);
    CHECK(ra.confusion == rb.confusion);
}

TEST_CASE("a single episode reports accuracy 0 or 1") {
    const auto ds = synthetic(2, 1.0, 1.0, 0, 0.3);
    EvalConfig cfg;
    cfg.episodes = 1;
    cfg.seed = 3;
    const auto r = evaluate(identity_params(ds), ds, cfg);
    CHECK((r.accuracy == 0.0 || r.accuracy == 1.0));
    CHECK(r.episodes == 1);
    CHECK(r.ci95 == 0.0); // p(1-p) = 0 either way
}

TEST_CASE("evaluation does not mutate the parameters") {
    const auto ds = synthetic(3, 1.0, 1.0, 2, 0.3);
    Rng rng(11);
    const auto params = dgadain::init_params(ds.manifest.l, dgadain::InitScheme::defaults, rng);
    const auto before = dgadain::flatten_params(params);
    EvalConfig cfg;
    cfg.episodes = 50;
    evaluate(params, ds, cfg);
    CHECK(dgadain::flatten_params(params) == before);
}

TEST_CASE("reports are reproducible and parallel equals serial exactly") {
    const auto ds = synthetic(4, 1.0, 1.0, 3, 0.4);
    Rng rng(13);
    const auto params = dgadain::init_params(ds.manifest.l, dgadain::InitScheme::defaults, rng);
    EvalConfig cfg;
    cfg.episodes = 400;
    cfg.seed = 17;

    const auto serial = evaluate(params, ds, cfg);
    const auto serial2 = evaluate(params, ds, cfg);
    CHECK(serial.accuracy == serial2.accuracy);

    EvalConfig par = cfg;
    par.threads = 4;
    const auto parallel = evaluate(params, ds, par);
    CHECK(parallel.accuracy == serial.accuracy);
    CHECK(parallel.correct == serial.correct);
    CHECK(parallel.confusion == serial.confusion);
    CHECK(parallel.per_class == serial.per_class);
}

TEST_CASE("confidence interval shrinks like 1/sqrt(episodes)") {
    const auto ds = synthetic(5, 1.0, 1.0, 5, 0.6);
    EvalConfig cfg;
    cfg.mode = embed::Mode::rgb_only;
    cfg.seed = 19;
    cfg.episodes = 500;
    const auto r1 = evaluate(identity_params(ds), ds, cfg);
    cfg.episodes = 1000;
    const auto r2 = evaluate(identity_params(ds), ds, cfg);
    const double ratio = r1.ci95 / r2.ci95;
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("accuracy equals correct/episodes and the ci formula holds") {
    const auto ds = synthetic(6, 1.0, 1.0, 2, 0.4);
    EvalConfig cfg;
    cfg.episodes = 250;
    cfg.seed = 23;
    const auto r = evaluate(identity_params(ds), ds, cfg);
    CHECK(r.accuracy == static_cast<double>(r.correct) / 250.0);
    CHECK(r.ci95 == doctest::Approx(1.96 * std::sqrt(r.accuracy * (1 - r.accuracy) / 250.0)));
    std::size_t conf_total = 0;
    for (const auto& row : r.confusion)
        for (std::size_t c : row) conf_total += c;
    CHECK(conf_total == 250);
    std::size_t class_total = 0;
    for (const auto& [cls, counts] : r.per_class) class_total += counts.second;
    CHECK(class_total == 250);
}

TEST_CASE("every embedding mode evaluates") {
    const auto ds = synthetic(7, 1.0, 1.0, 3, 0.4);
    Rng rng(29);
    const auto params = dgadain::init_params(ds.manifest.l, dgadain::InitScheme::defaults, rng);
    for (const auto mode : {embed::Mode::dgadain, embed::Mode::rgb_only, embed::Mode::concat,
                            embed::Mode::rgb_guide_depth, embed::Mode::two_way}) {
        EvalConfig cfg;
        cfg.mode = mode;
        cfg.episodes = 20;
        cfg.seed = 31;
        const auto r = evaluate(params, ds, cfg);
        CHECK(r.episodes == 20);
        CHECK(r.mode == embed::mode_to_string(mode));
    }
}

TEST_CASE("the shifted-depth probe changes depth plans only") {
    // heavy drift and a depth-dominant signal so clip position matters
    const auto ds = synthetic(8, 0.2, 1.0, 0, 0.5, 12, 8, 0.5, 32);
    EvalConfig cfg;
    cfg.episodes = 200;
    cfg.seed = 37;
    const auto matched = evaluate(identity_params(ds), ds, cfg);
    cfg.shifted_depth_probe = true;
    const auto probe = evaluate(identity_params(ds), ds, cfg);
    // identity fusion ignores depth entirely, so the probe must not move it
    CHECK(matched.accuracy == probe.accuracy);

    // concat reads the depth stream; wide segments with short windows make
    // the shift large enough to flip outcomes
    EvalConfig c2;
    c2.mode = embed::Mode::concat;
    c2.episodes = 200;
    c2.seed = 37;
    c2.num_seg = 2;
    c2.num_f = 2;
    const auto m2 = evaluate(identity_params(ds), ds, c2);
    c2.shifted_depth_probe = true;
    const auto p2 = evaluate(identity_params(ds), ds, c2);
    CHECK(m2.confusion != p2.confusion);
}

TEST_CASE("result line format") {
    const auto ds = synthetic(9, 1.0, 1.0, 0, 0.3);
    EvalConfig cfg;
    cfg.episodes = 10;
    cfg.seed = 41;
    const auto r = evaluate(identity_params(ds), ds, cfg);
    const auto line = r.result_line();
    CHECK(line.rfind("result mode=dgadain n_way=5 k_shot=1 episodes=10 acc=", 0) == 0);
    CHECK(line.find("ci95=") != std::string::npos);
}

TEST_CASE("ablate with empty axes reproduces a single evaluate") {
    const auto ds = synthetic(10, 1.0, 1.0, 3, 0.4);
    trainer::TrainConfig tc;
    tc.epochs = 1;
    tc.episodes_per_epoch = 5;
    tc.lr = 0.01;
    tc.seed = 43;
    EvalConfig ec;
    ec.episodes = 50;
    ec.seed = 47;

    const auto cells = ablate(ds, tc, ec, AblateAxes{});
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].mode == embed::Mode::dgadain);
    CHECK(cells[0].num_aug == tc.num_aug);
    CHECK(cells[0].k_shot == ec.k_shot);

    const auto trained = trainer::train(tc, ds);
    const auto direct = evaluate(trained.params, ds, ec);
    CHECK(cells[0].report.accuracy == direct.accuracy);
}

TEST_CASE("ablate axes produce the cross product and CSV schema") {
    const auto ds = synthetic(11, 1.0, 1.0, 3, 0.4);
    trainer::TrainConfig tc;
    tc.epochs = 1;
    tc.episodes_per_epoch = 4;
    tc.lr = 0.01;
    tc.seed = 53;
    EvalConfig ec;
    ec.episodes = 30;
    ec.seed = 59;

    AblateAxes axes;
    axes.modes = {embed::Mode::dgadain, embed::Mode::rgb_only, embed::Mode::concat};
    const auto cells = ablate(ds, tc, ec, axes);
    REQUIRE(cells.size() == 3);

    AblateAxes shots;
    shots.k_shots = {1, 3, 5};
    const auto shot_cells = ablate(ds, tc, ec, shots);
    REQUIRE(shot_cells.size() == 3);
    CHECK(shot_cells[0].k_shot == 1);
    CHECK(shot_cells[2].k_shot == 5);

    const auto csv = ablate_csv(shot_cells);
    CHECK(csv.rfind("mode,num_aug,k_shot,episodes,acc,ci95\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("ablate num_aug axis trains per value and uses the probe") {
    const auto ds = synthetic(12, 1.0, 1.0, 5, 0.6, 12, 8, 0.15, 32);
    trainer::TrainConfig tc;
    tc.epochs = 1;
    tc.episodes_per_epoch = 20;
    tc.lr = 0.05;
    tc.seed = 61;
    EvalConfig ec;
    ec.episodes = 100;
    ec.seed = 67;

    AblateAxes axes;
    axes.num_augs = {0, 2};
    const auto cells = ablate(ds, tc, ec, axes);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].num_aug == 0);
    CHECK(cells[1].num_aug == 2);
    // different training schedules give different checkpoints, so the cells
    // genuinely retrained
    CHECK(cells[0].report.accuracy != doctest::Approx(cells[1].report.accuracy).epsilon(1e-12));
}

TEST_CASE("eval config validation") {
    EvalConfig cfg;
    cfg.episodes = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.episodes = 1;
    cfg.threads = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
