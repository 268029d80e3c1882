// SPDX-License-Identifier: Apache-2.0
#include "alto/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "alto/common.hpp"

namespace alto {

MaskGrid binarize(const MaskGrid& m, float threshold) {
    MaskGrid out(m.height, m.width);
    for (size_t i = 0; i < m.values.size(); ++i)
        out.values[i] = m.values[i] >= threshold ? 1.0f : 0.0f;
    return out;
}

namespace {

std::pair<int64_t, int64_t> intersection_union(const MaskGrid& a, const MaskGrid& b) {
    require(a.same_shape(b), "iou: shape mismatch ", a.height, "x", a.width, " vs ",
            b.height, "x", b.width);
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const bool fa = a.values[i] >= kBinarizeThreshold;
        const bool fb = b.values[i] >= kBinarizeThreshold;
        inter += (fa && fb) ? 1 : 0;
        uni += (fa || fb) ? 1 : 0;
    }
    return {inter, uni};
}

}  // namespace

double iou(const MaskGrid& a, const MaskGrid& b) {
    const auto [inter, uni] = intersection_union(a, b);
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(inter) / static_cast<double>(uni);
}

MetricReport giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>> pairs) {
    require(!pairs.empty(), "giou_ciou: empty pair list");
    MetricReport rep;
    int64_t total_inter = 0, total_union = 0;
    for (const auto& [pred, gt] : pairs) {
        const auto [inter, uni] = intersection_union(pred, gt);
        rep.per_sample_iou.push_back(uni == 0 ? 1.0
                                              : static_cast<double>(inter) / static_cast<double>(uni));
        total_inter += inter;
        total_union += uni;
    }
    rep.giou = std::accumulate(rep.per_sample_iou.begin(), rep.per_sample_iou.end(), 0.0) /
               static_cast<double>(rep.per_sample_iou.size());
    rep.ciou = total_union == 0 ? 1.0
                                : static_cast<double>(total_inter) / static_cast<double>(total_union);
    return rep;
}

void write_mask(const std::string& path, const MaskGrid& m) {
    require(m.height > 0 && m.width > 0, "write_mask: empty grid");
    for (float v : m.values)
        require(std::isfinite(v) && v >= 0.0f && v <= 1.0f,
                "write_mask: value out of [0,1]: ", v);
    std::string buf = str_cat("P5\n", m.width, " ", m.height, "\n255\n");
    buf.reserve(buf.size() + m.values.size());
    for (float v : m.values)
        buf.push_back(static_cast<char>(static_cast<uint8_t>(std::lround(v * 255.0f))));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "write_mask: cannot open for writing: ", path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(out.good(), "write_mask: write failed: ", path);
}

namespace {

// PGM header tokenizer: skips whitespace and '#' comments, tracks the byte
// offset for error reporting.
struct PgmReader {
    const std::string& buf;
    size_t pos = 0;

    void skip_space() {
        while (pos < buf.size()) {
            const char c = buf[pos];
            if (c == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int read_int(const char* what) {
        skip_space();
        const size_t start = pos;
        long v = 0;
        while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
            v = v * 10 + (buf[pos] - '0');
            ++pos;
            if (v > 1'000'000'000) fail("read_mask: ", what, " overflows at byte offset ", start);
        }
        if (pos == start) fail("read_mask: expected ", what, " at byte offset ", pos);
        return static_cast<int>(v);
    }
};

}  // namespace

MaskGrid read_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "read_mask: cannot open: ", path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
        fail("read_mask: not a P5 PGM (bad magic at byte offset 0) in ", path);
    PgmReader r{buf, 2};
    const int width = r.read_int("width");
    const int height = r.read_int("height");
    const int maxval = r.read_int("maxval");
    if (maxval != 255) fail("read_mask: unsupported maxval ", maxval, " at byte offset ", r.pos);
    if (r.pos >= buf.size()) fail("read_mask: missing pixel data at byte offset ", r.pos);
    ++r.pos;  // single whitespace byte after maxval

    const size_t need = static_cast<size_t>(width) * static_cast<size_t>(height);
    if (buf.size() - r.pos < need)
        fail("read_mask: truncated payload, have ", buf.size() - r.pos, " bytes, need ", need,
             " at byte offset ", r.pos);

    MaskGrid m(height, width);
    for (size_t i = 0; i < need; ++i)
        m.values[i] = static_cast<float>(static_cast<uint8_t>(buf[r.pos + i])) / 255.0f;
    return m;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, "spearman: need two equal-length series");
    const size_t n = x.size();

    auto ranks = [n](std::span<const double> v) {
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };

    const std::vector<double> rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace alto
