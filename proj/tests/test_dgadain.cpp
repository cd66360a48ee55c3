#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "amefu/dgadain.hpp"
#include "amefu/embed.hpp"
#include "amefu/numerics.hpp"
#include "testutil.hpp"

using namespace amefu;
using namespace amefu::dgadain;

namespace {

// per-element reference implementation of the fusion forward pass
Batch3 forward_oracle(const DgadainParams& p, const Batch3& rgb, const Batch3& dep) {
    Batch3 out(rgb.b, rgb.d, rgb.l);
    for (std::size_t bi = 0; bi < rgb.b; ++bi)
        for (std::size_t di = 0; di < rgb.d; ++di) {
            double mean = 0.0;
            for (std::size_t li = 0; li < rgb.l; ++li) mean += rgb.at(bi, di, li);
            mean /= static_cast<double>(rgb.l);
            double var = 0.0;
            for (std::size_t li = 0; li < rgb.l; ++li) {
                const double d = rgb.at(bi, di, li) - mean;
                var += d * d;
            }
            var /= static_cast<double>(rgb.l);
            const double sigma = std::sqrt(var + p.eps);
            for (std::size_t li = 0; li < rgb.l; ++li) {
                double gamma = p.b_s[li];
                double beta = p.b_b[li];
                for (std::size_t lj = 0; lj < rgb.l; ++lj) {
                    gamma += p.w_s.at(li, lj) * dep.at(bi, di, lj);
                    beta += p.w_b.at(li, lj) * dep.at(bi, di, lj);
                }
                out.at(bi, di, li) =
                    gamma * (rgb.at(bi, di, li) - mean) / sigma + beta;
            }
        }
    return out;
}

DgadainParams random_params(std::size_t l, std::uint64_t seed) {
    Rng rng(seed);
    return init_params(l, InitScheme::defaults, rng);
}

} // namespace

TEST_CASE("init schemes") {
    Rng rng(1);
    const auto id = init_params(4, InitScheme::identity, rng);
    CHECK(std::all_of(id.w_s.data.begin(), id.w_s.data.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(id.w_b.data.begin(), id.w_b.data.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(id.b_s.begin(), id.b_s.end(), [](double v) { return v == 1.0; }));
    CHECK(std::all_of(id.b_b.begin(), id.b_b.end(), [](double v) { return v == 0.0; }));

    Rng r1(7), r2(7);
    const auto a = init_params(16, InitScheme::defaults, r1);
    const auto b = init_params(16, InitScheme::defaults, r2);
    CHECK(a.w_s.data == b.w_s.data);
    CHECK(a.w_b.data == b.w_b.data);
    const double bound = 1.0 / std::sqrt(16.0);
    for (double v : a.w_s.data) CHECK(std::fabs(v) <= bound);
    for (double v : a.w_b.data) CHECK(std::fabs(v) <= bound);
}

TEST_CASE("identity params reduce the forward pass to plain IN") {
    Rng rng(3);
    const auto params = init_params(6, InitScheme::identity, rng);
    const Batch3 rgb = testutil::random_batch(2, 3, 6, rng);
    const Batch3 dep = testutil::random_batch(2, 3, 6, rng);
    auto [fused, cache] = forward(params, rgb, dep);
    for (std::size_t bi = 0; bi < 2; ++bi)
        for (std::size_t di = 0; di < 3; ++di) {
            auto [mu, sigma] = numerics::mean_std(rgb.row(bi, di), params.eps);
            for (std::size_t li = 0; li < 6; ++li)
                CHECK(fused.at(bi, di, li) == (rgb.at(bi, di, li) - mu) / sigma);
        }
}

TEST_CASE("identity params make the output independent of the guide stream") {
    Rng rng(5);
    const auto params = init_params(8, InitScheme::identity, rng);
    const Batch3 rgb = testutil::random_batch(2, 2, 8, rng);
    const Batch3 dep1 = testutil::random_batch(2, 2, 8, rng);
    const Batch3 dep2 = testutil::random_batch(2, 2, 8, rng);
    const Batch3 f1 = forward(params, rgb, dep1).first;
    const Batch3 f2 = forward(params, rgb, dep2).first;
    double worst = 0.0;
    for (std::size_t i = 0; i < f1.data.size(); ++i)
        worst = std::max(worst, std::fabs(f1.data[i] - f2.data[i]));
    CHECK(worst < 1e-12);
}

TEST_CASE("default-init output does depend on the guide stream") {
    Rng rng(7);
    const auto params = random_params(8, 7);
    const Batch3 rgb = testutil::random_batch(2, 2, 8, rng);
    const Batch3 dep1 = testutil::random_batch(2, 2, 8, rng);
    Batch3 dep2 = dep1;
    for (double& v : dep2.data) v += 0.1;
    const Batch3 f1 = forward(params, rgb, dep1).first;
    const Batch3 f2 = forward(params, rgb, dep2).first;
    double worst = 0.0;
    for (std::size_t i = 0; i < f1.data.size(); ++i)
        worst = std::max(worst, std::fabs(f1.data[i] - f2.data[i]));
    CHECK(worst > 1e-6);
}

TEST_CASE("constant content row collapses to the shift vector") {
    Rng rng(9);
    const auto params = random_params(5, 11);
    Batch3 rgb(1, 1, 5, 2.5);
    const Batch3 dep = testutil::random_batch(1, 1, 5, rng);
    auto [fused, cache] = forward(params, rgb, dep);
    for (std::size_t li = 0; li < 5; ++li)
        CHECK(fused.at(0, 0, li) == doctest::Approx(cache.beta.at(0, 0, li)).epsilon(1e-15));
}

TEST_CASE("forward matches the scalar-loop oracle") {
    Rng rng(13);
    const auto params = random_params(4, 13);
    const Batch3 rgb = testutil::random_batch(2, 3, 4, rng);
    const Batch3 dep = testutil::random_batch(2, 3, 4, rng);
    const Batch3 got = forward(params, rgb, dep).first;
    const Batch3 want = forward_oracle(params, rgb, dep);
    for (std::size_t i = 0; i < got.data.size(); ++i)
        CHECK(std::fabs(got.data[i] - want.data[i]) < 1e-12);
}

TEST_CASE("normalized rows satisfy the exact IN contract") {
    Rng rng(17);
    const auto params = random_params(16, 17);
    const Batch3 rgb = testutil::random_batch(4, 4, 16, rng);
    const Batch3 dep = testutil::random_batch(4, 4, 16, rng);
    auto [fused, cache] = forward(params, rgb, dep);
    for (std::size_t bi = 0; bi < 4; ++bi)
        for (std::size_t di = 0; di < 4; ++di) {
            const auto xh = cache.xhat.row(bi, di);
            double mean = 0.0, sq = 0.0;
            for (double v : xh) {
                mean += v;
                sq += v * v;
            }
            mean /= 16.0;
            sq /= 16.0;
            CHECK(std::fabs(mean) < 1e-10);
            // independent two-pass variance of the raw row
            double rmean = 0.0;
            for (double v : rgb.row(bi, di)) rmean += v;
            rmean /= 16.0;
            double var = 0.0;
            for (double v : rgb.row(bi, di)) var += (v - rmean) * (v - rmean);
            var /= 16.0;
            CHECK(std::fabs(sq - var / (var + params.eps)) < 1e-10);
        }
}

TEST_CASE("backward of zero upstream gradient is zero") {
    Rng rng(19);
    const auto params = random_params(5, 19);
    const Batch3 rgb = testutil::random_batch(2, 2, 5, rng);
    const Batch3 dep = testutil::random_batch(2, 2, 5, rng);
    auto [fused, cache] = forward(params, rgb, dep);
    const Batch3 zero(2, 2, 5, 0.0);
    const auto grads = backward(params, cache, zero);
    for (double v : flatten_grads(grads)) CHECK(v == 0.0);
    for (double v : grads.i_rgb.data) CHECK(v == 0.0);
    for (double v : grads.i_d.data) CHECK(v == 0.0);
}

TEST_CASE("backward of the summed output under identity params") {
    // loss = sum(fused): grad_b_b[l] = B*D, grad_b_s[l] = sum of xhat[.,.,l]
    Rng rng(23);
    const auto params = init_params(4, InitScheme::identity, rng);
    const Batch3 rgb = testutil::random_batch(3, 2, 4, rng);
    const Batch3 dep = testutil::random_batch(3, 2, 4, rng);
    auto [fused, cache] = forward(params, rgb, dep);
    const Batch3 ones(3, 2, 4, 1.0);
    const auto grads = backward(params, cache, ones);
    for (std::size_t li = 0; li < 4; ++li) {
        CHECK(grads.b_b[li] == doctest::Approx(6.0).epsilon(1e-14));
        double want = 0.0;
        for (std::size_t bi = 0; bi < 3; ++bi)
            for (std::size_t di = 0; di < 2; ++di) want += cache.xhat.at(bi, di, li);
        CHECK(grads.b_s[li] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("all six gradients match central finite differences over 20 seeds") {
    const double h = 1e-5;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const auto params = random_params(5, seed + 100);
        const Batch3 rgb = testutil::random_batch(2, 3, 5, rng);
        const Batch3 dep = testutil::random_batch(2, 3, 5, rng);

        auto loss_of = [&](const DgadainParams& p, const Batch3& r, const Batch3& d) {
            const Batch3 fused = forward(p, r, d).first;
            double acc = 0.0;
            for (double v : fused.data) acc += 0.5 * v * v;
            return acc;
        };

        auto [fused, cache] = forward(params, rgb, dep);
        const auto grads = backward(params, cache, fused);

        // parameter blocks
        const auto analytic = flatten_grads(grads);
        auto fp = [&](std::span<const double> p) {
            DgadainParams tmp = params;
            unflatten_params(tmp, p);
            return loss_of(tmp, rgb, dep);
        };
        const auto numeric = numerics::finite_diff_grad(fp, flatten_params(params), h);
        for (std::size_t i = 0; i < numeric.size(); ++i)
            worst = std::max(worst, testutil::rel_err(analytic[i], numeric[i]));

        // both input streams
        auto fr = [&](std::span<const double> p) {
            Batch3 tmp = rgb;
            std::copy(p.begin(), p.end(), tmp.data.begin());
            return loss_of(params, tmp, dep);
        };
        const auto nr = numerics::finite_diff_grad(fr, rgb.data, h);
        for (std::size_t i = 0; i < nr.size(); ++i)
            worst = std::max(worst, testutil::rel_err(grads.i_rgb.data[i], nr[i]));

        auto fd = [&](std::span<const double> p) {
            Batch3 tmp = dep;
            std::copy(p.begin(), p.end(), tmp.data.begin());
            return loss_of(params, rgb, tmp);
        };
        const auto nd = numerics::finite_diff_grad(fd, dep.data, h);
        for (std::size_t i = 0; i < nd.size(); ++i)
            worst = std::max(worst, testutil::rel_err(grads.i_d.data[i], nd[i]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("fuse_video basics") {
    Rng rng(29);
    const auto id = init_params(6, InitScheme::identity, rng);

    // single frame: equals the normalized row
    Matrix rgb(1, 6), dep(1, 6);
    for (double& v : rgb.data) v = rng.normal();
    for (double& v : dep.data) v = rng.normal();
    const auto got = fuse_video(id, rgb, dep);
    auto [mu, sigma] = numerics::mean_std(rgb.row(0), id.eps);
    std::vector<double> want(6);
    for (std::size_t i = 0; i < 6; ++i) want[i] = (rgb.at(0, i) - mu) / sigma;
    want = numerics::l2_normalize(want);
    for (std::size_t i = 0; i < 6; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));

    // unit norm on random input
    const auto params = random_params(6, 31);
    Matrix rgb2 = testutil::random_matrix(5, 6, rng);
    Matrix dep2 = testutil::random_matrix(5, 6, rng);
    CHECK(std::fabs(numerics::norm(fuse_video(params, rgb2, dep2)) - 1.0) < 1e-12);
}

TEST_CASE("fuse_video is invariant to frame order") {
    Rng rng(37);
    const auto params = random_params(5, 37);
    Matrix rgb = testutil::random_matrix(4, 5, rng);
    Matrix dep = testutil::random_matrix(4, 5, rng);
    const auto base = fuse_video(params, rgb, dep);

    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    Matrix rgb_p(4, 5), dep_p(4, 5);
    for (std::size_t i = 0; i < 4; ++i) {
        std::copy(rgb.row(perm[i]).begin(), rgb.row(perm[i]).end(), rgb_p.row(i).begin());
        std::copy(dep.row(perm[i]).begin(), dep.row(perm[i]).end(), dep_p.row(i).begin());
    }
    const auto permuted = fuse_video(params, rgb_p, dep_p);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(base[i] == doctest::Approx(permuted[i]).epsilon(1e-12));
}

TEST_CASE("fuse_video rejects a zero-norm pooled feature") {
    Rng rng(41);
    const auto id = init_params(4, InitScheme::identity, rng);
    Matrix rgb(2, 4, 1.0); // constant rows normalize to zero
    Matrix dep(2, 4, 0.5);
    CHECK_THROWS_AS(fuse_video(id, rgb, dep), DegenerateInputError);
}

TEST_CASE("checkpoint round-trip with and without momentum") {
    testutil::TempDir dir("ckpt");
    Rng rng(43);
    const auto params = random_params(6, 43);
    auto momentum = init_params(6, InitScheme::identity, rng);
    for (double& v : momentum.w_s.data) v = rng.normal();
    for (double& v : momentum.b_b) v = rng.normal();

    const auto p1 = dir.file("with.amfp");
    save_checkpoint(p1, params, &momentum);
    DgadainParams m_out;
    const auto loaded = load_checkpoint(p1, &m_out);
    CHECK(loaded.l == params.l);
    CHECK(loaded.eps == params.eps);
    CHECK(loaded.w_s.data == params.w_s.data);
    CHECK(loaded.b_s == params.b_s);
    CHECK(loaded.w_b.data == params.w_b.data);
    CHECK(loaded.b_b == params.b_b);
    CHECK(m_out.l == 6);
    CHECK(m_out.w_s.data == momentum.w_s.data);
    CHECK(m_out.b_b == momentum.b_b);

    const auto p2 = dir.file("without.amfp");
    save_checkpoint(p2, params, nullptr);
    DgadainParams m_none;
    const auto loaded2 = load_checkpoint(p2, &m_none);
    CHECK(loaded2.w_b.data == params.w_b.data);
    CHECK(m_none.l == 0); // absent

    // corrupting the magic is detected
    auto bytes = testutil::read_file(p2);
    bytes[0] = 'X';
    {
        std::ofstream os(p2, std::ios::binary | std::ios::trunc);
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(p2), FormatError);
}

TEST_CASE("embed modes: role swap and two-way average") {
    Rng rng(47);
    const auto params = random_params(5, 47);
    Matrix rgb = testutil::random_matrix(3, 5, rng);
    Matrix dep = testutil::random_matrix(3, 5, rng);

    const auto direct = embed::embed_video(embed::Mode::dgadain, params, rgb, dep);
    const auto fused = fuse_video(params, rgb, dep);
    CHECK(direct == fused);

    const auto swapped = embed::embed_video(embed::Mode::rgb_guide_depth, params, rgb, dep);
    const auto fused_swapped = fuse_video(params, dep, rgb);
    CHECK(swapped == fused_swapped);

    const auto two = embed::embed_video(embed::Mode::two_way, params, rgb, dep);
    const auto pa = forward_pooled(params, rgb, dep, {});
    const auto pb = forward_pooled(params, dep, rgb, {});
    std::vector<double> avg(5);
    for (std::size_t i = 0; i < 5; ++i) avg[i] = 0.5 * (pa[i] + pb[i]);
    const auto want = numerics::l2_normalize(avg);
    for (std::size_t i = 0; i < 5; ++i) CHECK(two[i] == doctest::Approx(want[i]).epsilon(1e-14));
    CHECK(std::fabs(numerics::norm(two) - 1.0) < 1e-12);
}

TEST_CASE("embed backward matches finite differences for every parametric mode") {
    const double h = 1e-5;
    for (const auto mode :
         {embed::Mode::dgadain, embed::Mode::rgb_guide_depth, embed::Mode::two_way}) {
        for (const bool per_frame : {false, true}) {
            double worst = 0.0;
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                Rng rng(seed + 900);
                const auto params = random_params(5, seed + 500);
                Matrix rgb = testutil::random_matrix(3, 5, rng);
                Matrix dep = testutil::random_matrix(3, 5, rng);
                std::vector<double> probe(5);
                for (double& v : probe) v = rng.normal();

                const dgadain::PoolOptions opts{per_frame};
                const auto ctx = embed::embed_forward(mode, params, rgb, dep, opts);
                const auto grads = embed::embed_backward(mode, params, ctx, probe);
                const auto analytic = flatten_grads(grads);

                auto f = [&](std::span<const double> p) {
                    DgadainParams tmp = params;
                    unflatten_params(tmp, p);
                    const auto feat = embed::embed_video(mode, tmp, rgb, dep, opts);
                    return numerics::dot(feat, probe);
                };
                const auto numeric =
                    numerics::finite_diff_grad(f, flatten_params(params), h);
                for (std::size_t i = 0; i < numeric.size(); ++i)
                    worst = std::max(worst, testutil::rel_err(analytic[i], numeric[i]));
            }
            CAPTURE(static_cast<int>(mode));
            CAPTURE(per_frame);
            CHECK(worst < 1e-6);
        }
    }
}
