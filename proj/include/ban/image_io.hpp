#pragma once

#include <filesystem>

#include "ban/metrics.hpp"
#include "ban/tensor.hpp"

// PNG (8-bit) and binary Netpbm (P5/P6) raster I/O.
namespace ban::io {

// RGB raster [H, W, 3] with values in [0, 255]. Gray images are expanded.
Tensor load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Tensor& rgb);

// Single-channel index image.
metrics::LabelMap load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const metrics::LabelMap& mask);

}  // namespace ban::io
