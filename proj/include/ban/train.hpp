#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ban/data.hpp"
#include "ban/metrics.hpp"
#include "ban/model.hpp"

namespace ban::train {

struct OptimConfig {
    double base_lr = 1e-4;
    double head_lr_mult = 10.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void validate() const;
};

struct ScheduleConfig {
    int64_t max_iters = 1000;
    double power = 1.0;
    double min_lr = 0.0;

    void validate() const;
};

// min_lr + (base_lr - min_lr) * (1 - iter / max_iters)^power.
double poly_lr(int64_t iter, int64_t max_iters, double base_lr, double power, double min_lr);

struct ParamGroup {
    std::string name;
    ParamList params;
    double lr_mult = 1.0;
};

// "adapter" (bridges + Bi-TAB backbone) at 1x and "head" at head_lr_mult.
std::vector<ParamGroup> make_param_groups(const BanModel& model, double head_lr_mult);

// Adam with decoupled weight decay. Moments are keyed by parameter position
// inside each group, so the groups must not be rebuilt between steps.
class AdamW {
public:
    AdamW(std::vector<ParamGroup> groups, const OptimConfig& cfg);

    // Applies one update at base learning rate `lr`; parameters with no
    // gradient are left untouched.
    void step(double lr);
    void zero_grad();

    const std::vector<ParamGroup>& groups() const { return groups_; }
    int64_t steps() const { return t_; }

private:
    std::vector<ParamGroup> groups_;
    OptimConfig cfg_;
    std::vector<std::vector<Tensor>> m_, v_;
    int64_t t_ = 0;
};

// Normalized network input from a 0..255 raster.
Tensor model_input(const Tensor& image);

struct StepStats {
    double loss = 0.0;
    double lr = 0.0;
};

// One optimizer step on a batch: mean loss over samples, backward through the
// learnable parameters, AdamW update. Non-finite loss throws NumericError
// carrying a diagnostics dump; parameters are then left unchanged.
StepStats train_step(const BanModel& model, const std::vector<data::Sample>& batch, AdamW& opt, double lr);

// Raw logits for one pair at full resolution.
using LogitFn = std::function<Tensor(const Tensor& x1, const Tensor& x2)>;

LogitFn model_logits(const BanModel& model);

// Window origins along one axis: 0, stride, 2*stride, ... plus a final window
// flush with the far edge.
std::vector<int64_t> window_starts(int64_t size, int64_t window, int64_t stride);

struct WindowResult {
    Tensor logits;  // [H, W, K], averaged over covering windows
    metrics::LabelMap mask;
};

// Window logits are summed per pixel then divided by the cover count.
// `order` optionally permutes the window visiting sequence (testing hook).
WindowResult sliding_window_infer(const LogitFn& fn, const Tensor& x1, const Tensor& x2, int64_t window,
                                  int64_t stride, const std::vector<size_t>* order = nullptr);

struct InferConfig {
    int64_t window = 0;  // 0: whole image in one pass
    int64_t stride = 0;  // 0: window / 2
};

metrics::LabelMap predict_change(const BanModel& model, const Tensor& t1, const Tensor& t2, const InferConfig& infer);

// Confusion counts of the model over `records` (plus SCD tallies when the
// model has semantic heads and the records carry semantic masks).
metrics::ConfusionCounts evaluate(const BanModel& model, const std::vector<data::SampleRecord>& records,
                                  data::LabelMode mode, const InferConfig& infer);

struct FpsResult {
    double images_per_second = 0.0;
    double seconds = 0.0;
    int64_t images = 0;
};

// Throughput of `fn` on random pairs of side `resolution`, after `warmup`
// untimed calls.
FpsResult fps_benchmark(const std::function<void(const Tensor&, const Tensor&)>& fn, int64_t resolution,
                        int64_t n_images, int64_t warmup = 1, uint64_t seed = 0);

}  // namespace ban::train
