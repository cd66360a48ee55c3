#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "amefu/matrix.hpp"

namespace amefu::featurestore {

// One video: identity, class label and two equally shaped t x L feature
// streams (RGB and depth), already extracted by upstream sub-models.
struct VideoRecord {
    std::string id;
    std::uint32_t class_id = 0;
    std::size_t t = 0; // frame count
    Matrix rgb;        // t x L
    Matrix depth;      // t x L
};

struct Splits {
    std::set<std::uint32_t> base;
    std::set<std::uint32_t> val;
    std::set<std::uint32_t> novel;
};

struct VideoIndexEntry {
    std::uint64_t offset = 0; // absolute file offset of the record
    std::uint32_t class_id = 0;
    std::uint32_t t = 0;
};

struct DatasetManifest {
    std::uint32_t l = 0; // feature width, constant across the dataset
    Splits splits;
    std::map<std::string, VideoIndexEntry> index;

    std::size_t n_videos() const { return index.size(); }
};

// Parameters of the synthetic two-stream generator. Confusable class pairs
// share their RGB mean and are separated only in depth space, so depth
// carries the discriminative signal for them.
struct SyntheticSpec {
    std::size_t n_classes = 10;
    std::size_t videos_per_class = 30;
    std::size_t t = 32;
    std::size_t l = 64;
    double rgb_sep = 1.0;
    double depth_sep = 1.0;
    std::size_t confusable_pairs = 0;
    double noise_std = 0.0;
    double drift_std = 0.0; // std of per-frame cumulative drift increments
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticData {
    std::vector<VideoRecord> records;
    Splits splits;
};

// Serializes records plus a sidecar split file (path + ".splits").
// Features are stored little-endian float32; everything round-trips exactly
// except the float64 -> float32 quantization.
DatasetManifest write_dataset(const std::vector<VideoRecord>& records, const Splits& splits,
                              const std::string& path);

// Lazy access to a written dataset. The manifest is validated on load;
// each load_video call opens its own handle, so reads are concurrent-safe.
class DatasetReader {
  public:
    explicit DatasetReader(const std::string& path);

    const DatasetManifest& manifest() const { return manifest_; }
    VideoRecord load_video(const std::string& id) const;

  private:
    std::string path_;
    DatasetManifest manifest_;
};

// Eagerly loaded dataset, the form the trainer and evaluator consume.
struct Dataset {
    DatasetManifest manifest;
    std::vector<VideoRecord> records;
    std::map<std::uint32_t, std::vector<std::size_t>> by_class; // class -> record indices

    const std::set<std::uint32_t>& split_classes(const std::string& split) const;
};

Dataset load_dataset(const std::string& path);
Dataset make_dataset(std::vector<VideoRecord> records, Splits splits);

SyntheticData generate_synthetic(const SyntheticSpec& spec);

} // namespace amefu::featurestore
