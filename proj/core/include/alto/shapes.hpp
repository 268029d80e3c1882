// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alto/mask.hpp"

namespace alto {

enum class ShapeKind { disk, rectangle, polygon, ring };

/// One foreground component in normalized [0,1] coordinates (x right, y down).
struct ShapeComponent {
    ShapeKind kind = ShapeKind::disk;
    double cx = 0.5, cy = 0.5;
    double r_outer = 0.2;               // disk/ring radius, rectangle half-extents use rx/ry
    double r_inner = 0.0;               // ring only
    double rx = 0.2, ry = 0.2;          // rectangle half width/height
    std::vector<double> vertices_x, vertices_y;  // polygon
};

/// A multi-component shape plus its complexity score
/// (0.5 * normalized boundary length + component count).
struct ShapeSpec {
    std::vector<ShapeComponent> components;
    double complexity = 0.0;

    int component_count() const { return static_cast<int>(components.size()); }
};

/// Deterministic rasterization at pixel centers; shapes clip to the grid.
MaskGrid rasterize(const ShapeSpec& spec, int height, int width);

/// Boundary-pixel count of the binarized mask divided by 2*(h+w).
double normalized_perimeter(const MaskGrid& m);

double complexity_score(const ShapeSpec& spec, const MaskGrid& raster);

struct Sample {
    int id = 0;
    ShapeSpec spec;
    MaskGrid mask;
};

/// Deterministic for a fixed seed. Component count is uniform in
/// {1..max_components}; grids smaller than 8x8 are rejected.
std::vector<Sample> generate_dataset(uint64_t seed, int count, int grid, int max_components);

/// A sample as reloaded from disk (geometry is not persisted).
struct LoadedSample {
    int id = 0;
    MaskGrid mask;
    int components = 0;
    double complexity = 0.0;
};

/// Writes mask_%05d.pgm files plus manifest.jsonl
/// ({id, file, components, complexity} per line) into an existing directory.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples);

std::vector<LoadedSample> load_dataset(const std::string& dir);

std::vector<LoadedSample> to_loaded(const std::vector<Sample>& samples);

}  // namespace alto
