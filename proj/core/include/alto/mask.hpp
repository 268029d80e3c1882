// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace alto {

/// H x W raster of real values in [0, 1]. Binarization threshold is 0.5
/// everywhere in this project.
struct MaskGrid {
    int height = 0;
    int width = 0;
    std::vector<float> values;  // row-major

    MaskGrid() = default;
    MaskGrid(int h, int w, float fill = 0.0f)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

    float& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    float at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    int64_t numel() const { return static_cast<int64_t>(height) * width; }
    bool same_shape(const MaskGrid& o) const {
        return height == o.height && width == o.width;
    }
};

inline constexpr float kBinarizeThreshold = 0.5f;

MaskGrid binarize(const MaskGrid& m, float threshold = kBinarizeThreshold);

/// Intersection-over-union after binarization. Empty-union pairs score 1.0.
double iou(const MaskGrid& a, const MaskGrid& b);

struct MetricReport {
    std::vector<double> per_sample_iou;
    double giou = 0.0;  // mean of per-sample IoU
    double ciou = 0.0;  // total intersection / total union
    double mean_token_length = 0.0;
};

MetricReport giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>> pairs);

/// Binary PGM (P5), maxval 255, pixel = round(value * 255).
void write_mask(const std::string& path, const MaskGrid& m);
MaskGrid read_mask(const std::string& path);

/// Spearman rank correlation with average ranks on ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace alto
