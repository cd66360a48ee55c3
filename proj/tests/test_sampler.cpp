#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "amefu/sampler.hpp"
#include "testutil.hpp"

using namespace amefu;
using namespace amefu::sampler;

namespace {

featurestore::Dataset toy_dataset(std::size_t n_classes, std::size_t videos_per_class,
                                  std::size_t t, std::size_t l) {
    std::vector<featurestore::VideoRecord> recs;
    for (std::size_t c = 0; c < n_classes; ++c)
        for (std::size_t v = 0; v < videos_per_class; ++v) {
            featurestore::VideoRecord r;
            r.id = "c" + std::to_string(c) + "_v" + std::to_string(v);
            r.class_id = static_cast<std::uint32_t>(c);
            r.t = t;
            r.rgb = Matrix(t, l, static_cast<double>(c));
            r.depth = Matrix(t, l, static_cast<double>(c) + 0.5);
            recs.push_back(std::move(r));
        }
    featurestore::Splits splits;
    for (std::size_t c = 0; c < n_classes; ++c)
        splits.base.insert(static_cast<std::uint32_t>(c));
    return featurestore::make_dataset(std::move(recs), std::move(splits));
}

} // namespace

TEST_CASE("segment_bounds balanced partitions") {
    using bounds = std::vector<std::pair<std::size_t, std::size_t>>;
    CHECK(segment_bounds(16, 4) == bounds{{0, 4}, {4, 4}, {8, 4}, {12, 4}});
    CHECK(segment_bounds(10, 4) == bounds{{0, 3}, {3, 3}, {6, 2}, {8, 2}});
    CHECK(segment_bounds(1, 4) == bounds{{0, 1}, {1, 0}, {1, 0}, {1, 0}});
    CHECK(segment_bounds(5, 1) == bounds{{0, 5}});
}

TEST_CASE("segment_bounds covers [0,t) exactly once for all shapes") {
    for (std::size_t t = 1; t <= 40; ++t) {
        for (std::size_t ns = 1; ns <= 8; ++ns) {
            const auto b = segment_bounds(t, ns);
            REQUIRE(b.size() == ns);
            std::size_t expect_start = 0, total = 0, prev_len = t;
            for (const auto& [start, len] : b) {
                CHECK(start == expect_start);
                CHECK(len <= prev_len); // longer segments first
                expect_start += len;
                total += len;
                prev_len = len;
            }
            CHECK(total == t);
        }
    }
}

TEST_CASE("sample_clip center mode is the deterministic middle") {
    Rng rng(1);
    const auto exact = sample_clip(16, 4, 4, ClipMode::center, rng);
    std::vector<std::size_t> want(16);
    for (std::size_t i = 0; i < 16; ++i) want[i] = i;
    CHECK(exact.indices == want);
    CHECK(exact.offsets == std::vector<std::size_t>{0, 0, 0, 0});

    const auto centred = sample_clip(32, 4, 4, ClipMode::center, rng);
    CHECK(centred.offsets == std::vector<std::size_t>{2, 2, 2, 2});
    const std::vector<std::size_t> want32 = {2,  3,  4,  5,  10, 11, 12, 13,
                                             18, 19, 20, 21, 26, 27, 28, 29};
    CHECK(centred.indices == want32);

    // deterministic function of (t, num_seg, num_f)
    Rng rng2(999);
    CHECK(sample_clip(32, 4, 4, ClipMode::center, rng2).indices == want32);
}

TEST_CASE("sample_clip clamps short segments by repeating the last frame") {
    Rng rng(2);
    const auto plan = sample_clip(2, 4, 4, ClipMode::random, rng);
    CHECK(plan.indices.size() == 16);
    for (auto idx : plan.indices) CHECK(idx <= 1);
}

TEST_CASE("sample_clip indices are always valid frame indices") {
    Rng rng(3);
    for (std::size_t t = 1; t <= 24; ++t)
        for (int it = 0; it < 5; ++it) {
            const auto plan = sample_clip(t, 4, 4, ClipMode::random, rng);
            REQUIRE(plan.indices.size() == 16);
            for (auto idx : plan.indices) CHECK(idx < t);
            const auto b = segment_bounds(t, 4);
            for (std::size_t s = 0; s < 4; ++s) {
                const std::size_t len = b[s].second;
                CHECK(plan.offsets[s] <= (len > 4 ? len - 4 : 0));
            }
        }
}

TEST_CASE("random offsets are uniform over the legal range") {
    Rng rng(17);
    const std::size_t draws = 10000;
    // t=32, num_seg=4: every segment has length 8, offsets in [0,4]
    std::vector<std::vector<std::size_t>> counts(4, std::vector<std::size_t>(5, 0));
    for (std::size_t i = 0; i < draws; ++i) {
        const auto plan = sample_clip(32, 4, 4, ClipMode::random, rng);
        for (std::size_t s = 0; s < 4; ++s) {
            REQUIRE(plan.offsets[s] <= 4);
            ++counts[s][plan.offsets[s]];
        }
    }
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t o = 0; o <= 4; ++o) {
            const double freq = static_cast<double>(counts[s][o]) / draws;
            CHECK(freq == doctest::Approx(0.2).epsilon(0.1)); // 0.2 +- 0.02
        }
}

TEST_CASE("sample_pairs keeps the RGB plan fixed and flags matched pairs") {
    Rng rng(5);
    const auto none = sample_pairs(32, 4, 4, 0, rng);
    REQUIRE(none.size() == 1);
    CHECK(none[0].matched);
    CHECK(none[0].rgb_plan.offsets == none[0].depth_plan.offsets);

    for (std::size_t num_aug : {1u, 2u, 3u}) {
        const auto pairs = sample_pairs(32, 4, 4, num_aug, rng);
        REQUIRE(pairs.size() == 1 + num_aug);
        CHECK(pairs[0].matched);
        for (std::size_t i = 1; i < pairs.size(); ++i) {
            CHECK(pairs[i].rgb_plan.offsets == pairs[0].rgb_plan.offsets);
            CHECK(pairs[i].matched ==
                  (pairs[i].rgb_plan.offsets == pairs[i].depth_plan.offsets));
        }
    }
}

TEST_CASE("sample_pairs zero-slack case: every depth plan equals the rgb plan") {
    Rng rng(7);
    const auto pairs = sample_pairs(16, 4, 4, 2, rng);
    REQUIRE(pairs.size() == 3);
    for (const auto& p : pairs) {
        CHECK(p.rgb_plan.offsets == std::vector<std::size_t>{0, 0, 0, 0});
        CHECK(p.depth_plan.offsets == p.rgb_plan.offsets);
    }
    CHECK(pairs[0].matched);
}

TEST_CASE("resample_rgb mode redraws both modalities") {
    // with slack this will differ from the fixed-RGB invariant eventually
    Rng rng(11);
    bool saw_different_rgb = false;
    for (int it = 0; it < 20 && !saw_different_rgb; ++it) {
        const auto pairs = sample_pairs(32, 4, 4, 2, rng, true);
        for (std::size_t i = 1; i < pairs.size(); ++i)
            if (!(pairs[i].rgb_plan.offsets == pairs[0].rgb_plan.offsets))
                saw_different_rgb = true;
    }
    CHECK(saw_different_rgb);
}

TEST_CASE("sample_episode train phase shapes and invariants") {
    const auto ds = toy_dataset(8, 4, 32, 4);
    EpisodeParams params;
    params.n_way = 5;
    params.k_shot = 1;
    params.num_aug = 2;
    params.phase = Phase::train;

    Rng rng(13);
    const auto ep = sample_episode(ds, "base", params, rng);
    CHECK(ep.n_way == 5);
    REQUIRE(ep.support.size() == 5);
    std::set<std::size_t> slots, records;
    for (const auto& sv : ep.support) {
        slots.insert(sv.slot);
        records.insert(sv.record_index);
        REQUIRE(sv.pairs.size() == 3);
        CHECK(sv.pairs[0].matched);
    }
    CHECK(slots == std::set<std::size_t>{0, 1, 2, 3, 4});
    CHECK(ep.query.slot < 5);
    REQUIRE(ep.query.pairs.size() == 3);
    // query video is not in the support set
    CHECK(records.count(ep.query.record_index) == 0);
    // query belongs to the class of its slot
    const auto query_class = ds.records[ep.query.record_index].class_id;
    for (const auto& sv : ep.support)
        if (sv.slot == ep.query.slot)
            CHECK(ds.records[sv.record_index].class_id == query_class);
}

TEST_CASE("sample_episode test phase attaches one matched center pair") {
    const auto ds = toy_dataset(6, 3, 20, 4);
    EpisodeParams params;
    params.n_way = 5;
    params.k_shot = 1;
    params.num_aug = 2; // ignored in test phase
    params.phase = Phase::test;
    Rng rng(17);
    const auto ep = sample_episode(ds, "base", params, rng);
    for (const auto& sv : ep.support) {
        REQUIRE(sv.pairs.size() == 1);
        CHECK(sv.pairs[0].matched);
        const auto center = sample_clip(20, 4, 4, ClipMode::center, rng);
        CHECK(sv.pairs[0].rgb_plan.offsets == center.offsets);
    }
    REQUIRE(ep.query.pairs.size() == 1);
    CHECK(ep.query.pairs[0].matched);
}

TEST_CASE("sample_episode minimal split: query is the held-out video") {
    const auto ds = toy_dataset(5, 2, 16, 4);
    EpisodeParams params;
    params.n_way = 5;
    params.k_shot = 1;
    Rng rng(19);
    for (int it = 0; it < 10; ++it) {
        const auto ep = sample_episode(ds, "base", params, rng);
        std::set<std::size_t> used;
        for (const auto& sv : ep.support) used.insert(sv.record_index);
        CHECK(used.count(ep.query.record_index) == 0);
        CHECK(ds.records[ep.query.record_index].class_id ==
              ds.records[*std::find_if(used.begin(), used.end(), [&](std::size_t r) {
                  return ds.records[r].class_id == ds.records[ep.query.record_index].class_id;
              })].class_id);
    }
}

TEST_CASE("sample_episode determinism under a fixed stream") {
    const auto ds = toy_dataset(8, 4, 32, 4);
    EpisodeParams params;
    params.n_way = 5;
    params.k_shot = 2;
    params.num_aug = 1;
    Rng a = stream_for(99, stream_tag::episode, 42);
    Rng b = stream_for(99, stream_tag::episode, 42);
    const auto ea = sample_episode(ds, "base", params, a);
    const auto eb = sample_episode(ds, "base", params, b);
    REQUIRE(ea.support.size() == eb.support.size());
    for (std::size_t i = 0; i < ea.support.size(); ++i) {
        CHECK(ea.support[i].record_index == eb.support[i].record_index);
        CHECK(ea.support[i].slot == eb.support[i].slot);
        for (std::size_t j = 0; j < ea.support[i].pairs.size(); ++j) {
            CHECK(ea.support[i].pairs[j].rgb_plan.offsets ==
                  eb.support[i].pairs[j].rgb_plan.offsets);
            CHECK(ea.support[i].pairs[j].depth_plan.offsets ==
                  eb.support[i].pairs[j].depth_plan.offsets);
        }
    }
    CHECK(ea.query.record_index == eb.query.record_index);
}

TEST_CASE("sample_episode errors name the deficiency") {
    const auto ds = toy_dataset(3, 2, 16, 4);
    EpisodeParams params;
    params.n_way = 5;
    params.k_shot = 1;
    Rng rng(23);
    CHECK_THROWS_WITH_AS(sample_episode(ds, "base", params, rng), doctest::Contains("3 classes"),
                         SamplingError);

    params.n_way = 3;
    params.k_shot = 2; // needs 3 videos per class, classes have 2
    CHECK_THROWS_WITH_AS(sample_episode(ds, "base", params, rng), doctest::Contains("class"),
                         SamplingError);
}
