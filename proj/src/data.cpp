#include "ban/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <set>

#include "ban/error.hpp"
#include "ban/image_io.hpp"
#include "ban/ops.hpp"

namespace fs = std::filesystem;

namespace ban::data {

std::string to_string(Split split) {
    switch (split) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "train";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw ConfigError("unknown split '" + name + "'");
}

Layout Layout::named(const std::string& name) {
    if (name == "standard") return {};
    if (name == "levir") return {"A", "B", "label", "sem_t1", "sem_t2"};
    throw ConfigError("unknown dataset layout '" + name + "' (expected standard or levir)");
}

namespace {

std::set<std::string> list_files(const fs::path& dir) {
    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) names.insert(entry.path().filename().string());
    }
    return names;
}

bool is_dataset_dir(const fs::path& dir, const Layout& layout) {
    return fs::is_directory(dir / layout.t1) && fs::is_directory(dir / layout.t2) && fs::is_directory(dir / layout.label);
}

std::vector<SampleRecord> scan_one(const fs::path& dir, const Layout& layout, Split split) {
    std::vector<std::pair<std::string, std::set<std::string>>> folders = {
        {layout.t1, list_files(dir / layout.t1)},
        {layout.t2, list_files(dir / layout.t2)},
        {layout.label, list_files(dir / layout.label)},
    };
    const bool semantic = fs::is_directory(dir / layout.sem_t1) || fs::is_directory(dir / layout.sem_t2);
    if (semantic) {
        for (const auto& sub : {layout.sem_t1, layout.sem_t2}) {
            if (!fs::is_directory(dir / sub)) {
                throw DataError(dir.string() + ": semantic folder " + sub + "/ is missing");
            }
            folders.emplace_back(sub, list_files(dir / sub));
        }
    }
    std::set<std::string> all;
    for (const auto& [_, names] : folders) all.insert(names.begin(), names.end());
    std::string orphans;
    for (const auto& name : all) {
        for (const auto& [folder, names] : folders) {
            if (names.count(name)) continue;
            orphans += (orphans.empty() ? "" : "; ") + name + " (no match in " + folder + "/)";
        }
    }
    if (!orphans.empty()) throw DataError("orphan files under " + dir.string() + ": " + orphans);

    std::vector<SampleRecord> out;
    out.reserve(all.size());
    for (const auto& name : all) {
        SampleRecord r;
        r.name = name;
        r.t1 = dir / layout.t1 / name;
        r.t2 = dir / layout.t2 / name;
        r.label = dir / layout.label / name;
        if (semantic) {
            r.sem_t1 = dir / layout.sem_t1 / name;
            r.sem_t2 = dir / layout.sem_t2 / name;
        }
        r.split = split;
        out.push_back(std::move(r));
    }
    return out;
}

// Rejection-sampled uniform integer in [0, bound).
uint64_t bounded(std::mt19937_64& rng, uint64_t bound) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % bound;
}

Tensor crop_raster(const Tensor& img, CropOffset o, int64_t size) {
    const int64_t w = img.dim(1), c = img.dim(2);
    Tensor out({size, size, c});
    for (int64_t y = 0; y < size; ++y) {
        std::copy_n(img.data() + ((o.y + y) * w + o.x) * c, size * c, out.data() + y * size * c);
    }
    return out;
}

metrics::LabelMap crop_mask(const metrics::LabelMap& m, CropOffset o, int64_t size) {
    metrics::LabelMap out(size, size);
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) out.at(y, x) = m.at(o.y + y, o.x + x);
    }
    return out;
}

void flip_raster(Tensor& img, bool horizontal, bool vertical) {
    const int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor out(img.shape());
    for (int64_t y = 0; y < h; ++y) {
        const int64_t sy = vertical ? h - 1 - y : y;
        for (int64_t x = 0; x < w; ++x) {
            const int64_t sx = horizontal ? w - 1 - x : x;
            std::copy_n(img.data() + (sy * w + sx) * c, c, out.data() + (y * w + x) * c);
        }
    }
    img = std::move(out);
}

void flip_mask(metrics::LabelMap& m, bool horizontal, bool vertical) {
    metrics::LabelMap out(m.height, m.width);
    for (int64_t y = 0; y < m.height; ++y) {
        for (int64_t x = 0; x < m.width; ++x) {
            out.at(y, x) = m.at(vertical ? m.height - 1 - y : y, horizontal ? m.width - 1 - x : x);
        }
    }
    m = std::move(out);
}

void clip255(Tensor& image) {
    for (auto& v : image.values()) v = std::clamp(v, 0.0f, 255.0f);
}

// In-place RGB <-> HSV on [0,255] values; H in degrees [0, 360), S and V in [0, 1].
void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    r /= 255.0f;
    g /= 255.0f;
    b /= 255.0f;
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    v = mx;
    s = mx > 0.0f ? d / mx : 0.0f;
    if (d <= 0.0f) {
        h = 0.0f;
    } else if (mx == r) {
        h = 60.0f * std::fmod((g - b) / d, 6.0f);
    } else if (mx == g) {
        h = 60.0f * ((b - r) / d + 2.0f);
    } else {
        h = 60.0f * ((r - g) / d + 4.0f);
    }
    if (h < 0.0f) h += 360.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    const float c = v * s;
    const float hp = std::fmod(h, 360.0f) / 60.0f;
    const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
    float r1 = 0, g1 = 0, b1 = 0;
    switch (static_cast<int>(hp)) {
        case 0: r1 = c; g1 = x; break;
        case 1: r1 = x; g1 = c; break;
        case 2: g1 = c; b1 = x; break;
        case 3: g1 = x; b1 = c; break;
        case 4: r1 = x; b1 = c; break;
        default: r1 = c; b1 = x; break;
    }
    const float m = v - c;
    r = (r1 + m) * 255.0f;
    g = (g1 + m) * 255.0f;
    b = (b1 + m) * 255.0f;
}

template <typename Fn>
void map_hsv(Tensor& image, Fn&& fn) {
    const int64_t n = image.dim(0) * image.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        float* p = image.data() + i * 3;
        float h, s, v;
        rgb_to_hsv(p[0], p[1], p[2], h, s, v);
        fn(h, s);
        hsv_to_rgb(h, s, v, p[0], p[1], p[2]);
    }
}

void photometric_one(Tensor& image, const PhotometricConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> coin(0.0f, 1.0f);
    auto uniform = [&](float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); };
    if (coin(rng) < cfg.apply_prob) adjust_brightness(image, uniform(-cfg.brightness_delta, cfg.brightness_delta));
    const bool contrast_first = coin(rng) < 0.5f;
    auto contrast = [&] {
        if (coin(rng) < cfg.apply_prob) adjust_contrast(image, uniform(cfg.contrast_low, cfg.contrast_high));
    };
    if (contrast_first) contrast();
    if (coin(rng) < cfg.apply_prob) adjust_saturation(image, uniform(cfg.saturation_low, cfg.saturation_high));
    if (coin(rng) < cfg.apply_prob) adjust_hue(image, uniform(-cfg.hue_delta_degrees, cfg.hue_delta_degrees));
    if (!contrast_first) contrast();
}

}  // namespace

std::vector<SampleRecord> scan_dataset(const fs::path& root, const Layout& layout, Split fallback) {
    if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " does not exist");
    std::vector<SampleRecord> out;
    bool split_dirs = false;
    for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
        const fs::path dir = root / to_string(s);
        if (!is_dataset_dir(dir, layout)) continue;
        split_dirs = true;
        auto recs = scan_one(dir, layout, s);
        out.insert(out.end(), recs.begin(), recs.end());
    }
    if (split_dirs) return out;
    if (!is_dataset_dir(root, layout)) {
        throw DataError(root.string() + " has neither split folders nor " + layout.t1 + "/" + layout.t2 + "/" +
                        layout.label + "/");
    }
    auto recs = scan_one(root, layout, fallback);
    const fs::path manifests = root / "splits";
    if (!fs::is_directory(manifests)) return recs;

    std::map<std::string, Split> assignment;
    for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
        const fs::path m = manifests / (to_string(s) + ".txt");
        if (!fs::exists(m)) continue;
        for (const auto& name : read_manifest(m)) {
            if (!assignment.emplace(name, s).second) throw DataError(name + " listed in more than one split manifest");
        }
    }
    std::vector<SampleRecord> by_split[3];
    std::set<std::string> seen;
    for (auto& r : recs) {
        auto it = assignment.find(r.name);
        if (it == assignment.end()) throw DataError(r.name + " is not listed in any split manifest");
        r.split = it->second;
        seen.insert(r.name);
        by_split[static_cast<int>(r.split)].push_back(r);
    }
    for (const auto& [name, _] : assignment) {
        if (!seen.count(name)) throw DataError("split manifest lists missing sample " + name);
    }
    out.clear();
    for (auto& v : by_split) out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::vector<SampleRecord> filter_split(const std::vector<SampleRecord>& records, Split split) {
    std::vector<SampleRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [split](const SampleRecord& r) { return r.split == split; });
    return out;
}

std::vector<std::string> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read manifest " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    for (const auto& r : records) out << r.name << '\n';
}

LabelMode parse_label_mode(const std::string& name) {
    if (name == "index") return LabelMode::kIndex;
    if (name == "binary255") return LabelMode::kBinary255;
    throw ConfigError("unknown label_mode '" + name + "' (expected index or binary255)");
}

Sample load_sample(const SampleRecord& record, LabelMode mode) {
    Sample s;
    s.name = record.name;
    s.t1 = io::load_image(record.t1);
    s.t2 = io::load_image(record.t2);
    s.label = io::load_mask(record.label);
    if (mode == LabelMode::kBinary255) {
        for (auto& v : s.label.values) v = v != 0 ? 1 : 0;
    }
    if (record.sem_t1) s.sem1 = io::load_mask(*record.sem_t1);
    if (record.sem_t2) s.sem2 = io::load_mask(*record.sem_t2);
    const auto same = [&](int64_t h, int64_t w) { return h == s.t1.dim(0) && w == s.t1.dim(1); };
    bool ok = s.t1.shape() == s.t2.shape() && same(s.label.height, s.label.width);
    if (s.sem1) ok = ok && same(s.sem1->height, s.sem1->width);
    if (s.sem2) ok = ok && same(s.sem2->height, s.sem2->width);
    if (!ok) throw DataError("sample " + record.name + ": images and masks differ in size");
    return s;
}

void AugmentConfig::validate() const {
    if (crop_size < 0) throw ConfigError("crop_size must be >= 0");
    if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("flip_prob must lie in [0, 1]");
    if (photometric.apply_prob < 0.0f || photometric.apply_prob > 1.0f) {
        throw ConfigError("photometric apply_prob must lie in [0, 1]");
    }
    if (photometric.contrast_low > photometric.contrast_high ||
        photometric.saturation_low > photometric.saturation_high) {
        throw ConfigError("photometric ranges must be ordered low <= high");
    }
}

void crop_pair(Sample& s, CropOffset o, int64_t size) {
    const int64_t h = s.t1.dim(0), w = s.t1.dim(1);
    if (size < 1 || size > h || size > w) {
        throw ShapeError("crop size " + std::to_string(size) + " exceeds image " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    if (o.y < 0 || o.x < 0 || o.y + size > h || o.x + size > w) throw ShapeError("crop window leaves the image");
    s.t1 = crop_raster(s.t1, o, size);
    s.t2 = crop_raster(s.t2, o, size);
    s.label = crop_mask(s.label, o, size);
    if (s.sem1) s.sem1 = crop_mask(*s.sem1, o, size);
    if (s.sem2) s.sem2 = crop_mask(*s.sem2, o, size);
}

CropOffset random_crop_pair(Sample& s, int64_t size, std::mt19937_64& rng) {
    const int64_t h = s.t1.dim(0), w = s.t1.dim(1);
    if (size < 1 || size > h || size > w) {
        throw ShapeError("crop size " + std::to_string(size) + " exceeds image " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    CropOffset o;
    o.y = static_cast<int64_t>(bounded(rng, static_cast<uint64_t>(h - size + 1)));
    o.x = static_cast<int64_t>(bounded(rng, static_cast<uint64_t>(w - size + 1)));
    crop_pair(s, o, size);
    return o;
}

void flip_pair(Sample& s, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return;
    flip_raster(s.t1, horizontal, vertical);
    flip_raster(s.t2, horizontal, vertical);
    flip_mask(s.label, horizontal, vertical);
    if (s.sem1) flip_mask(*s.sem1, horizontal, vertical);
    if (s.sem2) flip_mask(*s.sem2, horizontal, vertical);
}

void random_flip_pair(Sample& s, double prob, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const bool h = coin(rng) < prob;
    const bool v = coin(rng) < prob;
    flip_pair(s, h, v);
}

void adjust_brightness(Tensor& image, float delta) {
    for (auto& v : image.values()) v += delta;
    clip255(image);
}

void adjust_contrast(Tensor& image, float factor) {
    for (auto& v : image.values()) v *= factor;
    clip255(image);
}

void adjust_saturation(Tensor& image, float factor) {
    map_hsv(image, [factor](float&, float& s) { s = std::clamp(s * factor, 0.0f, 1.0f); });
    clip255(image);
}

void adjust_hue(Tensor& image, float degrees) {
    map_hsv(image, [degrees](float& h, float&) {
        h = std::fmod(h + degrees, 360.0f);
        if (h < 0.0f) h += 360.0f;
    });
    clip255(image);
}

void photometric_pair(Sample& s, const PhotometricConfig& cfg, std::mt19937_64& rng) {
    if (!cfg.enabled) return;
    photometric_one(s.t1, cfg, rng);
    photometric_one(s.t2, cfg, rng);
}

void augment(Sample& s, const AugmentConfig& cfg, std::mt19937_64& rng) {
    if (cfg.crop_size > 0) random_crop_pair(s, cfg.crop_size, rng);
    random_flip_pair(s, cfg.flip_prob, rng);
    photometric_pair(s, cfg.photometric, rng);
}

std::vector<size_t> seeded_permutation(size_t n, uint64_t seed) {
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (size_t i = n; i > 1; --i) {
        const size_t j = static_cast<size_t>(bounded(rng, i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> label_fraction_split(
    const std::vector<SampleRecord>& records, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigError("label fraction must lie in (0, 1], got " + std::to_string(fraction));
    }
    const size_t n = records.size();
    const auto keep = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
    if (keep == 0) throw DataError("label fraction " + std::to_string(fraction) + " of " + std::to_string(n) +
                                   " records selects nothing");
    const auto perm = seeded_permutation(n, seed);
    std::vector<bool> labeled(n, false);
    for (size_t i = 0; i < keep; ++i) labeled[perm[i]] = true;
    std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> out;
    for (size_t i = 0; i < n; ++i) (labeled[i] ? out.first : out.second).push_back(records[i]);
    return out;
}

std::vector<std::vector<SampleRecord>> ratio_split(const std::vector<SampleRecord>& records,
                                                   const std::vector<double>& fractions, uint64_t seed) {
    if (fractions.empty() || fractions.size() > 3) throw ConfigError("ratio_split takes 1 to 3 fractions");
    double total = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw ConfigError("split fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    const size_t n = records.size();
    const auto perm = seeded_permutation(n, seed);
    std::vector<int> part(n, static_cast<int>(fractions.size()) - 1);
    double acc = 0.0;
    size_t begin = 0;
    for (size_t k = 0; k + 1 < fractions.size(); ++k) {
        acc += fractions[k];
        const auto end = static_cast<size_t>(std::llround(acc * static_cast<double>(n)));
        for (size_t i = begin; i < end && i < n; ++i) part[perm[i]] = static_cast<int>(k);
        begin = end;
    }
    std::vector<std::vector<SampleRecord>> out(fractions.size());
    for (size_t i = 0; i < n; ++i) {
        SampleRecord r = records[i];
        r.split = static_cast<Split>(part[i]);
        out[static_cast<size_t>(part[i])].push_back(std::move(r));
    }
    return out;
}

Tensor normalize(const Tensor& image, const Normalization& norm) {
    if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("normalize expects HxWx3, got " + shape_str(image.shape()));
    Tensor out(image.shape());
    const int64_t n = image.dim(0) * image.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) out[i * 3 + c] = (image[i * 3 + c] - norm.mean[c]) / norm.stddev[c];
    }
    return out;
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

BatchStream::BatchStream(std::vector<SampleRecord> records, AugmentConfig augment, LabelMode mode,
                         int64_t batch_size, uint64_t seed, int num_workers)
    : records_(std::move(records)),
      augment_(augment),
      mode_(mode),
      batch_size_(batch_size),
      seed_(seed),
      num_workers_(std::max(1, num_workers)) {
    if (records_.empty()) throw DataError("training set is empty");
    if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
    augment_.validate();
    order_ = seeded_permutation(records_.size(), mix_seed(seed_, 0));
}

std::vector<Sample> BatchStream::next() {
    struct Job {
        size_t record;
        uint64_t stream;
    };
    std::vector<Job> jobs;
    for (int64_t b = 0; b < batch_size_; ++b) {
        if (cursor_ == order_.size()) {
            ++epoch_;
            cursor_ = 0;
            order_ = seeded_permutation(records_.size(), mix_seed(seed_, static_cast<uint64_t>(epoch_)));
        }
        jobs.push_back({order_[cursor_], mix_seed(mix_seed(seed_, static_cast<uint64_t>(epoch_) + 1000003), cursor_)});
        ++cursor_;
    }
    auto work = [this](const Job& job) {
        Sample s = load_sample(records_[job.record], mode_);
        std::mt19937_64 rng(job.stream);
        augment(s, augment_, rng);
        return s;
    };
    std::vector<Sample> batch(jobs.size());
    for (size_t start = 0; start < jobs.size(); start += static_cast<size_t>(num_workers_)) {
        const size_t end = std::min(jobs.size(), start + static_cast<size_t>(num_workers_));
        std::vector<std::future<Sample>> futures;
        for (size_t i = start + 1; i < end; ++i) futures.push_back(std::async(std::launch::async, work, jobs[i]));
        batch[start] = work(jobs[start]);
        for (size_t i = start + 1; i < end; ++i) batch[i] = futures[i - start - 1].get();
    }
    return batch;
}

}  // namespace ban::data

namespace ban::data {

Sample synthetic_square_pair(int64_t size, uint64_t seed) {
    if (size < 8) throw ConfigError("synthetic pairs need size >= 8");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Sample s;
    s.name = "synthetic_" + std::to_string(seed);
    s.t1 = Tensor({size, size, 3});
    s.label = metrics::LabelMap(size, size, 0);
    // Low-frequency background from a coarse random grid, bilinearly upsampled.
    Tensor coarse({4, 4, 3});
    for (auto& v : coarse.values()) v = 60.0f + 120.0f * u(rng);
    s.t1 = ops::resize_bilinear(coarse, size, size);
    s.t2 = s.t1;
    std::normal_distribution<float> noise(0.0f, 4.0f);
    for (auto& v : s.t1.values()) v = std::clamp(v + noise(rng), 0.0f, 255.0f);
    for (auto& v : s.t2.values()) v = std::clamp(v + noise(rng), 0.0f, 255.0f);
    const int squares = 1 + static_cast<int>(bounded(rng, 3));
    for (int q = 0; q < squares; ++q) {
        const int64_t side = size / 8 + static_cast<int64_t>(bounded(rng, static_cast<uint64_t>(size / 4)));
        const int64_t y0 = static_cast<int64_t>(bounded(rng, static_cast<uint64_t>(size - side + 1)));
        const int64_t x0 = static_cast<int64_t>(bounded(rng, static_cast<uint64_t>(size - side + 1)));
        float color[3];
        for (auto& c : color) c = u(rng) < 0.5f ? 15.0f + 30.0f * u(rng) : 210.0f + 40.0f * u(rng);
        for (int64_t y = y0; y < y0 + side; ++y) {
            for (int64_t x = x0; x < x0 + side; ++x) {
                for (int c = 0; c < 3; ++c) s.t2[(y * size + x) * 3 + c] = color[c];
                s.label.at(y, x) = 1;
            }
        }
    }
    return s;
}

void write_synthetic_dataset(const fs::path& root, int train, int val, int64_t size, uint64_t seed) {
    auto emit = [&](const std::string& split, int count, uint64_t offset) {
        for (const char* sub : {"t1", "t2", "label"}) fs::create_directories(root / split / sub);
        for (int i = 0; i < count; ++i) {
            const Sample s = synthetic_square_pair(size, mix_seed(seed, offset + static_cast<uint64_t>(i)));
            char name[32];
            std::snprintf(name, sizeof(name), "%04d.png", i);
            io::save_image(root / split / "t1" / name, s.t1);
            io::save_image(root / split / "t2" / name, s.t2);
            io::save_mask(root / split / "label" / name, s.label);
        }
    };
    emit("train", train, 0);
    if (val > 0) emit("val", val, 1u << 20);
}

}  // namespace ban::data
