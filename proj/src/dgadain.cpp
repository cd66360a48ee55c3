#include "amefu/dgadain.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "amefu/numerics.hpp"

namespace amefu::dgadain {

void DgadainGrads::add(const DgadainGrads& other) {
    auto addv = [](std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    addv(w_s.data, other.w_s.data);
    addv(b_s, other.b_s);
    addv(w_b.data, other.w_b.data);
    addv(b_b, other.b_b);
    if (i_rgb.same_shape(other.i_rgb)) addv(i_rgb.data, other.i_rgb.data);
    if (i_d.same_shape(other.i_d)) addv(i_d.data, other.i_d.data);
}

void DgadainGrads::scale(double factor) {
    for (auto* v : {&w_s.data, &b_s, &w_b.data, &b_b, &i_rgb.data, &i_d.data})
        for (double& x : *v) x *= factor;
}

DgadainGrads zero_grads(const DgadainParams& params, std::size_t b, std::size_t d) {
    DgadainGrads g;
    g.w_s = Matrix(params.l, params.l);
    g.b_s.assign(params.l, 0.0);
    g.w_b = Matrix(params.l, params.l);
    g.b_b.assign(params.l, 0.0);
    g.i_rgb = Batch3(b, d, params.l);
    g.i_d = Batch3(b, d, params.l);
    return g;
}

DgadainParams init_params(std::size_t l, InitScheme scheme, Rng& rng, double eps) {
    if (l < 1)
        throw ShapeError("init_params: l must be >= 1");
    DgadainParams p;
    p.l = l;
    p.eps = eps;
    p.w_s = Matrix(l, l);
    p.w_b = Matrix(l, l);
    p.b_s.assign(l, 1.0);
    p.b_b.assign(l, 0.0);
    if (scheme == InitScheme::defaults) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l));
        for (double& v : p.w_s.data) v = rng.uniform(-bound, bound);
        for (double& v : p.w_b.data) v = rng.uniform(-bound, bound);
    }
    return p;
}

std::pair<Batch3, FusionCache> forward(const DgadainParams& params, const Batch3& i_rgb,
                                       const Batch3& i_d) {
    if (!i_rgb.same_shape(i_d))
        throw ShapeError("dgadain::forward: content and guide shapes differ");
    if (i_rgb.l != params.l)
        throw ShapeError("dgadain::forward: feature width " + std::to_string(i_rgb.l) +
                         " does not match params width " + std::to_string(params.l));

    const std::size_t B = i_rgb.b, D = i_rgb.d, L = i_rgb.l;
    Batch3 fused(B, D, L);
    FusionCache cache;
    cache.i_rgb = i_rgb;
    cache.i_d = i_d;
    cache.mu = Matrix(B, D);
    cache.sigma = Matrix(B, D);
    cache.xhat = Batch3(B, D, L);
    cache.gamma = Batch3(B, D, L);
    cache.beta = Batch3(B, D, L);

    for (std::size_t bi = 0; bi < B; ++bi) {
        for (std::size_t di = 0; di < D; ++di) {
            const auto x = i_rgb.row(bi, di);
            const auto g = i_d.row(bi, di);
            auto [mu, sigma] = numerics::mean_std(x, params.eps);
            cache.mu.at(bi, di) = mu;
            cache.sigma.at(bi, di) = sigma;

            auto xh = cache.xhat.row(bi, di);
            for (std::size_t li = 0; li < L; ++li) xh[li] = (x[li] - mu) / sigma;

            auto gamma = cache.gamma.row(bi, di);
            auto beta = cache.beta.row(bi, di);
            numerics::matvec(params.w_s, g, gamma);
            numerics::matvec(params.w_b, g, beta);
            for (std::size_t li = 0; li < L; ++li) {
                gamma[li] += params.b_s[li];
                beta[li] += params.b_b[li];
            }

            auto out = fused.row(bi, di);
            for (std::size_t li = 0; li < L; ++li) out[li] = gamma[li] * xh[li] + beta[li];
        }
    }
    return {std::move(fused), std::move(cache)};
}

DgadainGrads backward(const DgadainParams& params, const FusionCache& cache,
                      const Batch3& grad_fused) {
    if (!grad_fused.same_shape(cache.xhat))
        throw ShapeError("dgadain::backward: upstream gradient shape does not match cache");
    const std::size_t B = grad_fused.b, D = grad_fused.d, L = grad_fused.l;
    DgadainGrads grads = zero_grads(params, B, D);

    std::vector<double> grad_gamma(L), grad_xhat(L), wt_gamma(L), wt_beta(L);
    for (std::size_t bi = 0; bi < B; ++bi) {
        for (std::size_t di = 0; di < D; ++di) {
            const auto upstream = grad_fused.row(bi, di);
            const auto xh = cache.xhat.row(bi, di);
            const auto gamma = cache.gamma.row(bi, di);
            const auto guide = cache.i_d.row(bi, di);
            const double sigma = cache.sigma.at(bi, di);

            // fused = gamma .* xhat + beta
            // d/dgamma = upstream .* xhat; d/dbeta = upstream
            for (std::size_t li = 0; li < L; ++li) {
                grad_gamma[li] = upstream[li] * xh[li];
                grad_xhat[li] = upstream[li] * gamma[li];
            }

            // affine maps: gamma = w_s*guide + b_s, beta = w_b*guide + b_b
            for (std::size_t li = 0; li < L; ++li) {
                double* ws_row = grads.w_s.data.data() + li * L;
                double* wb_row = grads.w_b.data.data() + li * L;
                const double gg = grad_gamma[li];
                const double gb = upstream[li];
                for (std::size_t lj = 0; lj < L; ++lj) {
                    ws_row[lj] += gg * guide[lj];
                    wb_row[lj] += gb * guide[lj];
                }
                grads.b_s[li] += gg;
                grads.b_b[li] += gb;
            }

            // guide gradient: w_s^T * grad_gamma + w_b^T * grad_beta
            auto gd = grads.i_d.row(bi, di);
            for (std::size_t lj = 0; lj < L; ++lj) {
                double acc = 0.0;
                for (std::size_t li = 0; li < L; ++li)
                    acc += params.w_s.data[li * L + lj] * grad_gamma[li] +
                           params.w_b.data[li * L + lj] * upstream[li];
                gd[lj] = acc;
            }

            // content gradient through the normalization (full Jacobian):
            // dL/dx = (g - mean(g) - xhat * mean(g .* xhat)) / sigma
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t li = 0; li < L; ++li) {
                mean_g += grad_xhat[li];
                mean_gx += grad_xhat[li] * xh[li];
            }
            mean_g /= static_cast<double>(L);
            mean_gx /= static_cast<double>(L);
            auto gr = grads.i_rgb.row(bi, di);
            for (std::size_t li = 0; li < L; ++li)
                gr[li] = (grad_xhat[li] - mean_g - xh[li] * mean_gx) / sigma;
        }
    }
    return grads;
}

std::vector<double> forward_pooled(const DgadainParams& params, const Matrix& rgb_clip,
                                   const Matrix& depth_clip, const PoolOptions& opts,
                                   FusionCache* cache_out) {
    if (!rgb_clip.same_shape(depth_clip))
        throw ShapeError("forward_pooled: clip shapes differ");
    Batch3 rgb(1, rgb_clip.rows, rgb_clip.cols);
    Batch3 depth(1, depth_clip.rows, depth_clip.cols);
    rgb.data = rgb_clip.data;
    depth.data = depth_clip.data;
    auto [fused, cache] = forward(params, rgb, depth);

    const std::size_t D = fused.d, L = fused.l;
    std::vector<double> pooled(L, 0.0);
    for (std::size_t di = 0; di < D; ++di) {
        auto row = fused.row(0, di);
        if (opts.per_frame_norm) {
            auto n = numerics::l2_normalize(row);
            for (std::size_t li = 0; li < L; ++li) pooled[li] += n[li];
        } else {
            for (std::size_t li = 0; li < L; ++li) pooled[li] += row[li];
        }
    }
    for (double& v : pooled) v /= static_cast<double>(D);
    if (cache_out) *cache_out = std::move(cache);
    return pooled;
}

std::vector<double> fuse_video(const DgadainParams& params, const Matrix& rgb_clip,
                               const Matrix& depth_clip, const PoolOptions& opts) {
    auto pooled = forward_pooled(params, rgb_clip, depth_clip, opts);
    if (numerics::norm(pooled) == 0.0)
        throw DegenerateInputError("fuse_video: pooled feature has zero norm");
    return numerics::l2_normalize(pooled);
}

std::vector<double> flatten_params(const DgadainParams& params) {
    std::vector<double> flat;
    flat.reserve(2 * params.l * params.l + 2 * params.l);
    flat.insert(flat.end(), params.w_s.data.begin(), params.w_s.data.end());
    flat.insert(flat.end(), params.b_s.begin(), params.b_s.end());
    flat.insert(flat.end(), params.w_b.data.begin(), params.w_b.data.end());
    flat.insert(flat.end(), params.b_b.begin(), params.b_b.end());
    return flat;
}

void unflatten_params(DgadainParams& params, std::span<const double> flat) {
    const std::size_t l = params.l;
    if (flat.size() != 2 * l * l + 2 * l)
        throw ShapeError("unflatten_params: length mismatch");
    std::size_t pos = 0;
    std::copy(flat.begin() + pos, flat.begin() + pos + l * l, params.w_s.data.begin());
    pos += l * l;
    std::copy(flat.begin() + pos, flat.begin() + pos + l, params.b_s.begin());
    pos += l;
    std::copy(flat.begin() + pos, flat.begin() + pos + l * l, params.w_b.data.begin());
    pos += l * l;
    std::copy(flat.begin() + pos, flat.begin() + pos + l, params.b_b.begin());
}

std::vector<double> flatten_grads(const DgadainGrads& grads) {
    std::vector<double> flat;
    flat.insert(flat.end(), grads.w_s.data.begin(), grads.w_s.data.end());
    flat.insert(flat.end(), grads.b_s.begin(), grads.b_s.end());
    flat.insert(flat.end(), grads.w_b.data.begin(), grads.w_b.data.end());
    flat.insert(flat.end(), grads.b_b.begin(), grads.b_b.end());
    return flat;
}

namespace {

constexpr char kMagic[4] = {'A', 'M', 'F', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

bool get_f64(std::istream& is, double& v) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8) return false;
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &u, 8);
    return true;
}

void put_block(std::ostream& os, const DgadainParams& p) {
    for (double v : p.w_s.data) put_f64(os, v);
    for (double v : p.b_s) put_f64(os, v);
    for (double v : p.w_b.data) put_f64(os, v);
    for (double v : p.b_b) put_f64(os, v);
}

bool get_block(std::istream& is, DgadainParams& p) {
    for (double& v : p.w_s.data)
        if (!get_f64(is, v)) return false;
    for (double& v : p.b_s)
        if (!get_f64(is, v)) return false;
    for (double& v : p.w_b.data)
        if (!get_f64(is, v)) return false;
    for (double& v : p.b_b)
        if (!get_f64(is, v)) return false;
    return true;
}

} // namespace

void save_checkpoint(const std::string& path, const DgadainParams& params,
                     const DgadainParams* momentum) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("save_checkpoint: cannot open '" + path + "'");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(params.l));
    put_f64(os, params.eps);
    put_block(os, params);
    const unsigned char flag = momentum ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&flag), 1);
    if (momentum) {
        if (momentum->l != params.l)
            throw ShapeError("save_checkpoint: momentum width mismatch");
        put_block(os, *momentum);
    }
    if (!os)
        throw IoError("save_checkpoint: write failed for '" + path + "'");
}

DgadainParams load_checkpoint(const std::string& path, DgadainParams* momentum_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("load_checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("load_checkpoint: bad magic in '" + path + "'");
    std::uint32_t version = 0, l = 0;
    if (!get_u32(is, version) || version != kVersion)
        throw FormatError("load_checkpoint: unsupported version");
    if (!get_u32(is, l) || l < 1)
        throw FormatError("load_checkpoint: bad width");
    DgadainParams p;
    p.l = l;
    p.w_s = Matrix(l, l);
    p.w_b = Matrix(l, l);
    p.b_s.assign(l, 0.0);
    p.b_b.assign(l, 0.0);
    if (!get_f64(is, p.eps) || !get_block(is, p))
        throw FormatError("load_checkpoint: truncated parameter block");
    unsigned char flag = 0;
    is.read(reinterpret_cast<char*>(&flag), 1);
    if (is.gcount() != 1)
        throw FormatError("load_checkpoint: missing trainer-state flag");
    if (flag == 1 && momentum_out) {
        *momentum_out = p;
        if (!get_block(is, *momentum_out))
            throw FormatError("load_checkpoint: truncated momentum block");
    } else if (flag == 1) {
        DgadainParams skip = p;
        if (!get_block(is, skip))
            throw FormatError("load_checkpoint: truncated momentum block");
    } else if (momentum_out) {
        momentum_out->l = 0; // signals absent momentum
    }
    return p;
}

} // namespace amefu::dgadain
