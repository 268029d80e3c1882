// SPDX-License-Identifier: Apache-2.0
#include "alto/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "alto/common.hpp"

namespace alto {

namespace {

void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > buf.size())
            fail("checkpoint: truncated while reading ", what, " at byte offset ", pos);
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = static_cast<uint8_t>(buf[pos]) |
                     (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        const uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::string buf;
    buf.append("ALTO");
    put_u16(buf, kCheckpointVersion);
    put_u32(buf, static_cast<uint32_t>(entries.size()));
    for (const auto& e : entries) {
        require(e.name.size() <= 0xffff, "checkpoint: entry name too long: ", e.name);
        require(e.data.size() == e.numel(), "checkpoint: entry ", e.name, " has ",
                e.data.size(), " values but dims imply ", e.numel());
        put_u16(buf, static_cast<uint16_t>(e.name.size()));
        buf.append(e.name);
        buf.push_back(static_cast<char>(e.dims.size()));
        for (uint32_t d : e.dims) put_u32(buf, d);
        for (float v : e.data) put_f32(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "checkpoint: cannot open for writing: ", path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(out.good(), "checkpoint: write failed: ", path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "checkpoint: cannot open: ", path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{buf};
    r.need(4, "magic");
    if (buf.compare(0, 4, "ALTO") != 0)
        fail("checkpoint: bad magic at byte offset 0 in ", path);
    r.pos = 4;
    const uint16_t version = r.u16("version");
    require(version == kCheckpointVersion, "checkpoint: unsupported version ", version);
    const uint32_t count = r.u32("entry count");

    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const uint16_t name_len = r.u16("name length");
        r.need(name_len, "name");
        e.name.assign(buf, r.pos, name_len);
        r.pos += name_len;
        const uint8_t rank = r.u8("rank");
        e.dims.resize(rank);
        for (uint8_t d = 0; d < rank; ++d) e.dims[d] = r.u32("dims");
        const uint64_t n = e.numel();
        e.data.resize(n);
        for (uint64_t k = 0; k < n; ++k) e.data[k] = r.f32("payload");
        entries.push_back(std::move(e));
    }
    if (r.pos != buf.size())
        fail("checkpoint: ", buf.size() - r.pos, " trailing bytes at offset ", r.pos);
    return entries;
}

const CheckpointEntry* find_entry(const std::vector<CheckpointEntry>& entries,
                                  const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

}  // namespace alto
