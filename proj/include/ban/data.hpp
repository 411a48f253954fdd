#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ban/metrics.hpp"
#include "ban/tensor.hpp"

// Bi-temporal dataset ingestion, paired augmentation, splitting and batching.
namespace ban::data {

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split split);
Split parse_split(const std::string& name);

struct SampleRecord {
    std::string name;  // shared filename
    std::filesystem::path t1, t2, label;
    std::optional<std::filesystem::path> sem_t1, sem_t2;
    Split split = Split::kTrain;

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

// Folder names used under a dataset (or split) root.
struct Layout {
    std::string t1 = "t1";
    std::string t2 = "t2";
    std::string label = "label";
    std::string sem_t1 = "sem_t1";
    std::string sem_t2 = "sem_t2";

    // "standard" (t1/t2/label) or "levir" (A/B/label).
    static Layout named(const std::string& name);
};

// Discovers records under `root`:
//   root/{train,val,test}/<layout dirs>  -> one split per subdirectory
//   root/<layout dirs> + root/splits/{train,val,test}.txt -> manifest assignment
//   root/<layout dirs>                   -> everything tagged `fallback`
// Records are in lexicographic filename order within each split, splits in
// train/val/test order. Orphan files raise a DataError naming each of them.
std::vector<SampleRecord> scan_dataset(const std::filesystem::path& root, const Layout& layout = {},
                                       Split fallback = Split::kTrain);

std::vector<SampleRecord> filter_split(const std::vector<SampleRecord>& records, Split split);

std::vector<std::string> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);

enum class LabelMode {
    kIndex,      // stored values are class indices
    kBinary255,  // any non-zero value means change (0/255 masks)
};
LabelMode parse_label_mode(const std::string& name);

struct Sample {
    std::string name;
    Tensor t1, t2;  // [H, W, 3], 0..255
    metrics::LabelMap label;
    std::optional<metrics::LabelMap> sem1, sem2;
};

Sample load_sample(const SampleRecord& record, LabelMode mode = LabelMode::kIndex);

struct PhotometricConfig {
    bool enabled = true;
    float brightness_delta = 32.0f;
    float contrast_low = 0.5f, contrast_high = 1.5f;
    float saturation_low = 0.5f, saturation_high = 1.5f;
    float hue_delta_degrees = 18.0f;
    float apply_prob = 0.5f;  // per transform
};

struct AugmentConfig {
    int64_t crop_size = 0;  // 0: no crop
    double flip_prob = 0.5;
    PhotometricConfig photometric;

    void validate() const;
};

struct CropOffset {
    int64_t y = 0;
    int64_t x = 0;
};

// One offset for every raster and mask of the sample.
CropOffset random_crop_pair(Sample& sample, int64_t size, std::mt19937_64& rng);
void crop_pair(Sample& sample, CropOffset offset, int64_t size);

// Geometric flips applied jointly to images and masks.
void flip_pair(Sample& sample, bool horizontal, bool vertical);
void random_flip_pair(Sample& sample, double prob, std::mt19937_64& rng);

// Photometric jitter on the two images only; masks are never touched.
void photometric_pair(Sample& sample, const PhotometricConfig& cfg, std::mt19937_64& rng);
void adjust_brightness(Tensor& image, float delta);
void adjust_contrast(Tensor& image, float factor);
void adjust_saturation(Tensor& image, float factor);
void adjust_hue(Tensor& image, float degrees);

void augment(Sample& sample, const AugmentConfig& cfg, std::mt19937_64& rng);

// Fisher-Yates permutation of [0, n) from a seeded 64-bit Mersenne twister
// with rejection-sampled bounded draws (identical on every platform).
std::vector<size_t> seeded_permutation(size_t n, uint64_t seed);

// Seeded subset of round(fraction * n) labeled records; the rest are withheld
// and never used for training. Both halves keep the input order.
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> label_fraction_split(
    const std::vector<SampleRecord>& records, double fraction, uint64_t seed);

// Seeded partition by ratios (e.g. 0.6/0.2/0.2), re-tagged train/val/test.
std::vector<std::vector<SampleRecord>> ratio_split(const std::vector<SampleRecord>& records,
                                                   const std::vector<double>& fractions, uint64_t seed);

struct Normalization {
    float mean[3] = {123.675f, 116.28f, 103.53f};
    float stddev[3] = {58.395f, 57.12f, 57.375f};
};

Tensor normalize(const Tensor& image, const Normalization& norm);

// Reproducible stream of augmented training batches. Each sample draws from
// its own generator seeded by (seed, epoch, position), so the stream does not
// depend on how many workers decode it.
class BatchStream {
public:
    BatchStream(std::vector<SampleRecord> records, AugmentConfig augment, LabelMode mode, int64_t batch_size,
                uint64_t seed, int num_workers = 1);

    std::vector<Sample> next();
    int64_t epoch() const { return epoch_; }

private:
    std::vector<SampleRecord> records_;
    AugmentConfig augment_;
    LabelMode mode_;
    int64_t batch_size_;
    uint64_t seed_;
    int num_workers_;
    int64_t epoch_ = 0;
    size_t cursor_ = 0;
    std::vector<size_t> order_;
};

// Deterministic stream seed mixing (splitmix64).
uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace ban::data

namespace ban::data {

// Synthetic bi-temporal pair: a shared smooth background, small per-phase
// noise, and 1-3 solid squares inserted in T2 only. The label marks the
// squares (1) over unchanged ground (0).
Sample synthetic_square_pair(int64_t size, uint64_t seed);

// Writes `train` + `val` synthetic pairs as PNG under root/{train,val}/{t1,t2,label}.
void write_synthetic_dataset(const std::filesystem::path& root, int train, int val, int64_t size, uint64_t seed);

}  // namespace ban::data
