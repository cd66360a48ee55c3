#include "amefu/featurestore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "amefu/rng.hpp"

namespace amefu::featurestore {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'F', 'U'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    put_bytes(os, b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 8);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

bool get_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(is.gcount()) == n;
}

bool get_u16(std::istream& is, std::uint16_t& v) {
    unsigned char b[2];
    if (!get_bytes(is, b, 2)) return false;
    v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    return true;
}

bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!get_bytes(is, b, 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

bool get_u64(std::istream& is, std::uint64_t& v) {
    unsigned char b[8];
    if (!get_bytes(is, b, 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

std::string split_path(const std::string& path) { return path + ".splits"; }

void write_split_line(std::ostream& os, const char* name, const std::set<std::uint32_t>& ids) {
    os << name << ":";
    bool first = true;
    for (std::uint32_t c : ids) {
        os << (first ? " " : ",") << c;
        first = false;
    }
    os << "\n";
}

std::set<std::uint32_t> parse_split_line(const std::string& line, const std::string& name) {
    const std::string prefix = name + ":";
    if (line.rfind(prefix, 0) != 0)
        throw FormatError("split file: expected line starting with '" + prefix + "', got '" +
                          line + "'");
    std::set<std::uint32_t> out;
    std::string rest = line.substr(prefix.size());
    std::string tok;
    std::istringstream ss(rest);
    while (std::getline(ss, tok, ',')) {
        // tolerate spaces around ids
        tok.erase(std::remove_if(tok.begin(), tok.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; }),
                  tok.end());
        if (tok.empty()) continue;
        std::size_t pos = 0;
        unsigned long v = std::stoul(tok, &pos);
        if (pos != tok.size())
            throw FormatError("split file: bad class id '" + tok + "' in " + name + " split");
        out.insert(static_cast<std::uint32_t>(v));
    }
    return out;
}

void check_splits_disjoint(const Splits& s) {
    auto overlap = [](const std::set<std::uint32_t>& a, const std::set<std::uint32_t>& b,
                      const char* an, const char* bn) {
        for (std::uint32_t c : a)
            if (b.count(c))
                throw FormatError(std::string("splits: class ") + std::to_string(c) +
                                  " appears in both " + an + " and " + bn);
    };
    overlap(s.base, s.val, "base", "val");
    overlap(s.base, s.novel, "base", "novel");
    overlap(s.val, s.novel, "val", "novel");
}

bool in_some_split(const Splits& s, std::uint32_t c) {
    return s.base.count(c) || s.val.count(c) || s.novel.count(c);
}

} // namespace

void SyntheticSpec::validate() const {
    if (n_classes == 0 || videos_per_class == 0 || t == 0 || l == 0)
        throw ConfigError("synthetic spec: counts and dimensions must be >= 1");
    if (2 * confusable_pairs > n_classes)
        throw ConfigError("synthetic spec: 2*confusable_pairs (" +
                          std::to_string(2 * confusable_pairs) + ") exceeds n_classes (" +
                          std::to_string(n_classes) + ")");
    if (rgb_sep < 0.0 || depth_sep < 0.0 || noise_std < 0.0 || drift_std < 0.0)
        throw ConfigError("synthetic spec: separations and stds must be >= 0");
}

DatasetManifest write_dataset(const std::vector<VideoRecord>& records, const Splits& splits,
                              const std::string& path) {
    check_splits_disjoint(splits);
    std::uint32_t l = 0;
    for (const auto& r : records) {
        if (r.rgb.rows != r.t || r.depth.rows != r.t || !r.rgb.same_shape(r.depth))
            throw ShapeError("write_dataset: video '" + r.id + "' streams have inconsistent shape");
        if (r.t == 0)
            throw ShapeError("write_dataset: video '" + r.id + "' has zero frames");
        if (l == 0)
            l = static_cast<std::uint32_t>(r.rgb.cols);
        else if (r.rgb.cols != l)
            throw ShapeError("write_dataset: video '" + r.id + "' has feature width " +
                             std::to_string(r.rgb.cols) + ", expected " + std::to_string(l));
        if (!in_some_split(splits, r.class_id))
            throw FormatError("write_dataset: class " + std::to_string(r.class_id) +
                              " of video '" + r.id + "' is in no split");
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("write_dataset: cannot open '" + path + "' for writing");

    DatasetManifest manifest;
    manifest.l = l;
    manifest.splits = splits;

    put_bytes(os, kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, l);
    put_u64(os, records.size());
    for (const auto& r : records) {
        if (r.id.size() > 0xffff)
            throw FormatError("write_dataset: id too long: '" + r.id + "'");
        const std::uint64_t offset = static_cast<std::uint64_t>(os.tellp());
        put_u16(os, static_cast<std::uint16_t>(r.id.size()));
        put_bytes(os, r.id.data(), r.id.size());
        put_u32(os, r.class_id);
        put_u32(os, static_cast<std::uint32_t>(r.t));
        for (double v : r.rgb.data) put_f32(os, static_cast<float>(v));
        for (double v : r.depth.data) put_f32(os, static_cast<float>(v));
        if (manifest.index.count(r.id))
            throw FormatError("write_dataset: duplicate video id '" + r.id + "'");
        manifest.index[r.id] = VideoIndexEntry{offset, r.class_id, static_cast<std::uint32_t>(r.t)};
    }
    if (!os)
        throw IoError("write_dataset: write failed for '" + path + "'");
    os.close();

    std::ofstream ss(split_path(path), std::ios::trunc);
    if (!ss)
        throw IoError("write_dataset: cannot open '" + split_path(path) + "' for writing");
    write_split_line(ss, "base", splits.base);
    write_split_line(ss, "val", splits.val);
    write_split_line(ss, "novel", splits.novel);
    if (!ss)
        throw IoError("write_dataset: write failed for '" + split_path(path) + "'");
    return manifest;
}

DatasetReader::DatasetReader(const std::string& path) : path_(path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("read_dataset: cannot open '" + path + "'");
    is.seekg(0, std::ios::end);
    const std::uint64_t fsize = static_cast<std::uint64_t>(is.tellg());
    is.seekg(0, std::ios::beg);

    char magic[4];
    if (!get_bytes(is, magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("read_dataset: bad magic in '" + path + "'");
    std::uint32_t version = 0;
    if (!get_u32(is, version))
        throw FormatError("read_dataset: truncated header in '" + path + "'");
    if (version != kVersion)
        throw FormatError("read_dataset: unsupported version " + std::to_string(version));
    std::uint64_t n_videos = 0;
    if (!get_u32(is, manifest_.l) || !get_u64(is, n_videos))
        throw FormatError("read_dataset: truncated header in '" + path + "'");

    for (std::uint64_t i = 0; i < n_videos; ++i) {
        const std::uint64_t offset = static_cast<std::uint64_t>(is.tellg());
        std::uint16_t id_len = 0;
        if (!get_u16(is, id_len))
            throw FormatError("read_dataset: truncated at video " + std::to_string(i) + " of " +
                              std::to_string(n_videos));
        std::string id(id_len, '\0');
        if (!get_bytes(is, id.data(), id_len))
            throw FormatError("read_dataset: truncated id at video " + std::to_string(i));
        VideoIndexEntry e;
        e.offset = offset;
        if (!get_u32(is, e.class_id) || !get_u32(is, e.t))
            throw FormatError("read_dataset: truncated record for video '" + id + "'");
        if (e.t == 0)
            throw FormatError("read_dataset: zero frame count for video '" + id + "'");
        const std::uint64_t payload = 2ull * e.t * manifest_.l * 4ull; // rgb + depth float32
        const std::uint64_t payload_start = static_cast<std::uint64_t>(is.tellg());
        if (payload_start + payload > fsize)
            throw FormatError("read_dataset: truncated payload for video '" + id + "'");
        is.seekg(static_cast<std::streamoff>(payload), std::ios::cur);
        if (manifest_.index.count(id))
            throw FormatError("read_dataset: duplicate video id '" + id + "'");
        manifest_.index[id] = e;
    }

    std::ifstream ss(split_path(path));
    if (!ss)
        throw IoError("read_dataset: cannot open split file '" + split_path(path) + "'");
    std::string line;
    if (!std::getline(ss, line))
        throw FormatError("split file: missing base line");
    manifest_.splits.base = parse_split_line(line, "base");
    if (!std::getline(ss, line))
        throw FormatError("split file: missing val line");
    manifest_.splits.val = parse_split_line(line, "val");
    if (!std::getline(ss, line))
        throw FormatError("split file: missing novel line");
    manifest_.splits.novel = parse_split_line(line, "novel");

    check_splits_disjoint(manifest_.splits);
    for (const auto& [id, e] : manifest_.index)
        if (!in_some_split(manifest_.splits, e.class_id))
            throw FormatError("read_dataset: class " + std::to_string(e.class_id) + " of video '" +
                              id + "' is in no declared split");
}

VideoRecord DatasetReader::load_video(const std::string& id) const {
    auto it = manifest_.index.find(id);
    if (it == manifest_.index.end())
        throw IndexError("load_video: unknown id '" + id + "'");
    const VideoIndexEntry& e = it->second;

    std::ifstream is(path_, std::ios::binary);
    if (!is)
        throw IoError("load_video: cannot open '" + path_ + "'");
    is.seekg(static_cast<std::streamoff>(e.offset + 2 + id.size() + 8));

    VideoRecord r;
    r.id = id;
    r.class_id = e.class_id;
    r.t = e.t;
    r.rgb = Matrix(e.t, manifest_.l);
    r.depth = Matrix(e.t, manifest_.l);
    const std::size_t n = static_cast<std::size_t>(e.t) * manifest_.l;
    std::vector<std::uint32_t> buf(n);
    auto read_stream = [&](Matrix& m) {
        if (!get_bytes(is, buf.data(), n * 4))
            throw FormatError("load_video: truncated payload for video '" + id + "'");
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t u = buf[i];
            // stored little-endian; this code assumes a little-endian host
            float f;
            std::memcpy(&f, &u, 4);
            m.data[i] = static_cast<double>(f);
        }
    };
    read_stream(r.rgb);
    read_stream(r.depth);
    return r;
}

const std::set<std::uint32_t>& Dataset::split_classes(const std::string& split) const {
    if (split == "base") return manifest.splits.base;
    if (split == "val") return manifest.splits.val;
    if (split == "novel") return manifest.splits.novel;
    throw ConfigError("unknown split '" + split + "' (expected base|val|novel)");
}

Dataset make_dataset(std::vector<VideoRecord> records, Splits splits) {
    check_splits_disjoint(splits);
    Dataset ds;
    ds.manifest.splits = std::move(splits);
    ds.records = std::move(records);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        if (ds.manifest.l == 0)
            ds.manifest.l = static_cast<std::uint32_t>(r.rgb.cols);
        if (!in_some_split(ds.manifest.splits, r.class_id))
            throw FormatError("dataset: class " + std::to_string(r.class_id) + " of video '" +
                              r.id + "' is in no split");
        ds.manifest.index[r.id] =
            VideoIndexEntry{0, r.class_id, static_cast<std::uint32_t>(r.t)};
        ds.by_class[r.class_id].push_back(i);
    }
    return ds;
}

Dataset load_dataset(const std::string& path) {
    DatasetReader reader(path);
    Dataset ds;
    ds.manifest = reader.manifest();
    ds.records.reserve(ds.manifest.index.size());
    for (const auto& [id, e] : ds.manifest.index) {
        ds.by_class[e.class_id].push_back(ds.records.size());
        ds.records.push_back(reader.load_video(id));
    }
    return ds;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng = stream_for(spec.seed, stream_tag::data_gen);

    auto draw_unit = [&](std::size_t l) {
        std::vector<double> v(l);
        double n2 = 0.0;
        do {
            n2 = 0.0;
            for (auto& x : v) {
                x = rng.normal();
                n2 += x * x;
            }
        } while (n2 == 0.0);
        const double inv = 1.0 / std::sqrt(n2);
        for (auto& x : v) x *= inv;
        return v;
    };

    // Class means. Paired classes (2i, 2i+1) share the RGB mean; their depth
    // means sit depth_sep apart around a common base, all pairs split along
    // one shared axis. The shared axis is what makes depth structure learned
    // on base classes transfer to novel ones.
    std::vector<std::vector<double>> rgb_mean(spec.n_classes), depth_mean(spec.n_classes);
    const std::vector<double> pair_axis =
        spec.confusable_pairs > 0 ? draw_unit(spec.l) : std::vector<double>();
    for (std::size_t p = 0; p < spec.confusable_pairs; ++p) {
        const std::size_t a = 2 * p, b = 2 * p + 1;
        auto u = draw_unit(spec.l);
        std::vector<double> m(spec.l);
        for (std::size_t i = 0; i < spec.l; ++i) m[i] = spec.rgb_sep * u[i];
        rgb_mean[a] = m;
        rgb_mean[b] = m;
        auto w = draw_unit(spec.l);
        depth_mean[a].resize(spec.l);
        depth_mean[b].resize(spec.l);
        for (std::size_t i = 0; i < spec.l; ++i) {
            const double base = spec.depth_sep * w[i];
            depth_mean[a][i] = base + 0.5 * spec.depth_sep * pair_axis[i];
            depth_mean[b][i] = base - 0.5 * spec.depth_sep * pair_axis[i];
        }
    }
    for (std::size_t c = 2 * spec.confusable_pairs; c < spec.n_classes; ++c) {
        auto u = draw_unit(spec.l);
        auto w = draw_unit(spec.l);
        rgb_mean[c].resize(spec.l);
        depth_mean[c].resize(spec.l);
        for (std::size_t i = 0; i < spec.l; ++i) {
            rgb_mean[c][i] = spec.rgb_sep * u[i];
            depth_mean[c][i] = spec.depth_sep * w[i];
        }
    }

    SyntheticData out;
    out.records.reserve(spec.n_classes * spec.videos_per_class);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t v = 0; v < spec.videos_per_class; ++v) {
            VideoRecord r;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "c%02zu_v%03zu", c, v);
            r.id = buf;
            r.class_id = static_cast<std::uint32_t>(c);
            r.t = spec.t;
            auto gen_stream = [&](const std::vector<double>& mean) {
                Matrix m(spec.t, spec.l);
                std::vector<double> drift(spec.l, 0.0);
                for (std::size_t f = 0; f < spec.t; ++f) {
                    if (spec.drift_std > 0.0)
                        for (auto& d : drift) d += rng.normal(0.0, spec.drift_std);
                    for (std::size_t i = 0; i < spec.l; ++i) {
                        double x = mean[i] + drift[i];
                        if (spec.noise_std > 0.0) x += rng.normal(0.0, spec.noise_std);
                        m.at(f, i) = x;
                    }
                }
                return m;
            };
            r.rgb = gen_stream(rgb_mean[c]);
            r.depth = gen_stream(depth_mean[c]);
            out.records.push_back(std::move(r));
        }
    }

    // Split policy: first half of the class ids is the base split, the last
    // min(5, remainder) classes are novel, anything between is validation.
    // Five matches the usual n_way, so novel evaluation works out of the box.
    const std::size_t n_base = (spec.n_classes + 1) / 2;
    const std::size_t n_novel = std::min<std::size_t>(5, spec.n_classes - n_base);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        if (c < n_base)
            out.splits.base.insert(static_cast<std::uint32_t>(c));
        else if (c >= spec.n_classes - n_novel)
            out.splits.novel.insert(static_cast<std::uint32_t>(c));
        else
            out.splits.val.insert(static_cast<std::uint32_t>(c));
    }
    return out;
}

} // namespace amefu::featurestore
