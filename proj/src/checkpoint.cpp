#include "bioaug/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "bioaug/errors.hpp"

namespace bioaug {
namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError("checkpoint parse error at byte " + std::to_string(pos) + ": " + what);
    }

    void need(size_t n, const char* what) const {
        if (pos + n > buf.size()) {
            throw DataError("checkpoint parse error at byte " + std::to_string(pos) +
                            ": truncated while reading " + what);
        }
    }

    uint16_t u16(const char* what) {
        need(2, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 2;
        return static_cast<uint16_t>(p[0] | (p[1] << 8));
    }

    uint32_t u32(const char* what) {
        need(4, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
               (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    }

    uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<uint8_t>(buf[pos++]);
    }

    double f64(const char* what) {
        need(8, what);
        uint64_t bits = 0;
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
        pos += 8;
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }

    std::string bytes(size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::string out;
    out += "BARL";
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        if (name.size() > 0xffff) throw DataError("checkpoint: tensor name too long: " + name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(t.rank()));
        for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
        for (double v : t.data) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("checkpoint: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("checkpoint: write failed: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};
    const std::string magic = r.bytes(4, "magic");
    if (magic != "BARL")
        throw DataError("checkpoint: unsupported format (bad magic at byte 0): " + path);
    const uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = r.u32("tensor count");
    ParamStore params;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = r.u16("name length");
        const std::string name = r.bytes(name_len, "name");
        const uint8_t rank = r.u8("rank");
        std::vector<int> shape(rank);
        size_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int>(r.u32("dimension"));
            numel *= static_cast<size_t>(shape[d]);
        }
        Tensor t;
        t.shape = std::move(shape);
        t.data.resize(numel);
        for (size_t j = 0; j < numel; ++j) t.data[j] = r.f64("payload");
        if (params.count(name)) r.fail("duplicate tensor name '" + name + "'");
        params.emplace(name, std::move(t));
    }
    if (r.pos != buf.size()) r.fail("trailing bytes after last tensor");
    return params;
}

size_t param_count(const ParamStore& params) {
    size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

}  // namespace bioaug
