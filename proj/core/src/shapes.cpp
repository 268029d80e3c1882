// SPDX-License-Identifier: Apache-2.0
#include "alto/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "alto/common.hpp"
#include "alto/rng.hpp"

#include "json.hpp"

namespace alto {

namespace {

bool point_in_component(const ShapeComponent& c, double x, double y) {
    switch (c.kind) {
        case ShapeKind::disk: {
            const double dx = x - c.cx, dy = y - c.cy;
            return dx * dx + dy * dy <= c.r_outer * c.r_outer;
        }
        case ShapeKind::ring: {
            const double dx = x - c.cx, dy = y - c.cy;
            const double d2 = dx * dx + dy * dy;
            return d2 <= c.r_outer * c.r_outer && d2 >= c.r_inner * c.r_inner;
        }
        case ShapeKind::rectangle:
            return std::abs(x - c.cx) <= c.rx && std::abs(y - c.cy) <= c.ry;
        case ShapeKind::polygon: {
            // even-odd rule
            bool inside = false;
            const size_t n = c.vertices_x.size();
            for (size_t i = 0, j = n - 1; i < n; j = i++) {
                const double xi = c.vertices_x[i], yi = c.vertices_y[i];
                const double xj = c.vertices_x[j], yj = c.vertices_y[j];
                if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi)
                    inside = !inside;
            }
            return inside;
        }
    }
    return false;
}

}  // namespace

MaskGrid rasterize(const ShapeSpec& spec, int height, int width) {
    MaskGrid m(height, width);
    for (int r = 0; r < height; ++r) {
        const double y = (r + 0.5) / height;
        for (int col = 0; col < width; ++col) {
            const double x = (col + 0.5) / width;
            for (const auto& c : spec.components) {
                if (point_in_component(c, x, y)) {
                    m.at(r, col) = 1.0f;
                    break;
                }
            }
        }
    }
    return m;
}

double normalized_perimeter(const MaskGrid& m) {
    int64_t boundary = 0;
    for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
            if (m.at(r, c) < kBinarizeThreshold) continue;
            const bool edge = r == 0 || r == m.height - 1 || c == 0 || c == m.width - 1 ||
                              m.at(r - 1, c) < kBinarizeThreshold ||
                              m.at(r + 1, c) < kBinarizeThreshold ||
                              m.at(r, c - 1) < kBinarizeThreshold ||
                              m.at(r, c + 1) < kBinarizeThreshold;
            if (edge) ++boundary;
        }
    }
    return static_cast<double>(boundary) / (2.0 * (m.height + m.width));
}

double complexity_score(const ShapeSpec& spec, const MaskGrid& raster) {
    return 0.5 * normalized_perimeter(raster) + static_cast<double>(spec.component_count());
}

namespace {

ShapeComponent random_component(Rng& rng) {
    ShapeComponent c;
    const int kind = rng.uniform_int(0, 3);
    c.cx = 0.15 + 0.7 * rng.uniform();
    c.cy = 0.15 + 0.7 * rng.uniform();
    switch (kind) {
        case 0:
            c.kind = ShapeKind::disk;
            c.r_outer = 0.06 + 0.18 * rng.uniform();
            break;
        case 1:
            c.kind = ShapeKind::rectangle;
            c.rx = 0.05 + 0.18 * rng.uniform();
            c.ry = 0.05 + 0.18 * rng.uniform();
            break;
        case 2: {
            c.kind = ShapeKind::polygon;
            const int nv = rng.uniform_int(3, 8);
            // star-shaped polygon: sorted angles with jittered radii
            std::vector<double> angles(nv);
            for (auto& a : angles) a = rng.uniform() * 6.283185307179586;
            std::sort(angles.begin(), angles.end());
            const double base = 0.08 + 0.16 * rng.uniform();
            for (int i = 0; i < nv; ++i) {
                const double rad = base * (0.5 + 0.8 * rng.uniform());
                c.vertices_x.push_back(c.cx + rad * std::cos(angles[i]));
                c.vertices_y.push_back(c.cy + rad * std::sin(angles[i]));
            }
            break;
        }
        default:
            c.kind = ShapeKind::ring;
            c.r_outer = 0.1 + 0.16 * rng.uniform();
            c.r_inner = c.r_outer * (0.35 + 0.3 * rng.uniform());
            break;
    }
    return c;
}

}  // namespace

std::vector<Sample> generate_dataset(uint64_t seed, int count, int grid, int max_components) {
    require(count > 0, "generate_dataset: count must be positive, got ", count);
    require(max_components >= 1, "generate_dataset: max_components must be >= 1, got ",
            max_components);
    require(grid >= 8, "generate_dataset: grid must be at least 8x8, got ", grid);

    Rng rng(seed);
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        Sample s;
        s.id = i;
        const int k = rng.uniform_int(1, max_components);
        for (int j = 0; j < k; ++j) s.spec.components.push_back(random_component(rng));
        s.mask = rasterize(s.spec, grid, grid);
        s.spec.complexity = complexity_score(s.spec, s.mask);
        out.push_back(std::move(s));
    }
    return out;
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples) {
    namespace fs = std::filesystem;
    require(fs::is_directory(dir), "write_dataset: not a directory: ", dir);
    std::ofstream manifest(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
    require(manifest.good(), "write_dataset: cannot write manifest in ", dir);
    char name[32];
    for (const auto& s : samples) {
        std::snprintf(name, sizeof(name), "mask_%05d.pgm", s.id);
        write_mask((fs::path(dir) / name).string(), s.mask);
        nlohmann::json line = {{"id", s.id},
                               {"file", name},
                               {"components", s.spec.component_count()},
                               {"complexity", s.spec.complexity}};
        manifest << line.dump() << "\n";
    }
    require(manifest.good(), "write_dataset: manifest write failed in ", dir);
}

std::vector<LoadedSample> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "manifest.jsonl";
    std::ifstream manifest(manifest_path);
    require(manifest.good(), "load_dataset: cannot open ", manifest_path.string());

    std::vector<LoadedSample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail("load_dataset: bad manifest line ", line_no, ": ", e.what());
        }
        LoadedSample s;
        s.id = j.at("id").get<int>();
        s.components = j.at("components").get<int>();
        s.complexity = j.at("complexity").get<double>();
        s.mask = read_mask((fs::path(dir) / j.at("file").get<std::string>()).string());
        out.push_back(std::move(s));
    }
    require(!out.empty(), "load_dataset: empty dataset in ", dir);
    return out;
}

std::vector<LoadedSample> to_loaded(const std::vector<Sample>& samples) {
    std::vector<LoadedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(LoadedSample{s.id, s.mask, s.spec.component_count(), s.spec.complexity});
    return out;
}

}  // namespace alto
