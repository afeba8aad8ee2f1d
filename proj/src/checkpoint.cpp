#include "mxpp/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace mxpp {

namespace {

void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

} // namespace

void Checkpoint::put(const std::string& name, std::vector<int> shape, std::vector<float> data) {
    size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw format_error("Checkpoint: nonpositive extent in tensor " + name);
        n *= static_cast<size_t>(e);
    }
    if (n != data.size()) throw format_error("Checkpoint: payload size mismatch for tensor " + name);
    tensors.push_back({name, std::move(shape), std::move(data)});
}

const CkptTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const CkptTensor& Checkpoint::require(const std::string& name) const {
    const CkptTensor* t = find(name);
    if (!t) throw format_error("Checkpoint: missing tensor " + name);
    return *t;
}

void Checkpoint::save(const std::string& path) const {
    std::vector<const CkptTensor*> sorted;
    sorted.reserve(tensors.size());
    for (const auto& t : tensors) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(),
              [](const CkptTensor* a, const CkptTensor* b) { return a->name < b->name; });
    for (size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i - 1]->name == sorted[i]->name)
            throw format_error("Checkpoint: duplicate tensor name " + sorted[i]->name);

    std::string buf;
    buf.append("MXPP");
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<uint32_t>(sorted.size()));
    for (const CkptTensor* t : sorted) {
        if (t->name.size() > 0xffff) throw format_error("Checkpoint: tensor name too long");
        put_u16(buf, static_cast<uint16_t>(t->name.size()));
        buf.append(t->name);
        buf.push_back(0); // dtype 0 = float32
        if (t->shape.size() > 0xff) throw format_error("Checkpoint: rank too large");
        buf.push_back(static_cast<char>(t->shape.size()));
        for (int e : t->shape) put_u32(buf, static_cast<uint32_t>(e));
        const size_t bytes = t->data.size() * sizeof(float);
        const size_t off = buf.size();
        buf.resize(off + bytes);
        std::memcpy(buf.data() + off, t->data.data(), bytes); // little-endian host
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("Checkpoint: cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw format_error("Checkpoint: short write to " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("Checkpoint: cannot open " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const unsigned char* p = reinterpret_cast<const unsigned char*>(raw.data());
    const size_t size = raw.size();
    size_t off = 0;

    auto need = [&](size_t n) {
        if (off + n > size) throw format_error("Checkpoint: truncated file " + path);
    };

    need(4);
    if (std::memcmp(p, "MXPP", 4) != 0) throw format_error("Checkpoint: bad magic in " + path);
    off += 4;
    need(4);
    const uint32_t version = get_u32(p + off);
    off += 4;
    if (version != kVersion)
        throw format_error("Checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    need(4);
    const uint32_t count = get_u32(p + off);
    off += 4;

    Checkpoint ckpt;
    std::string prev_name;
    for (uint32_t i = 0; i < count; ++i) {
        need(2);
        const uint16_t name_len = get_u16(p + off);
        off += 2;
        need(name_len);
        std::string name(raw.data() + off, name_len);
        off += name_len;
        need(2);
        const unsigned char dtype = p[off++];
        const unsigned char rank = p[off++];
        if (dtype != 0) throw format_error("Checkpoint: unsupported dtype code in tensor " + name);
        std::vector<int> shape(rank);
        size_t n = 1;
        for (int r = 0; r < rank; ++r) {
            need(4);
            shape[r] = static_cast<int>(get_u32(p + off));
            off += 4;
            if (shape[r] <= 0) throw format_error("Checkpoint: bad extent in tensor " + name);
            n *= static_cast<size_t>(shape[r]);
        }
        need(n * sizeof(float));
        std::vector<float> data(n);
        std::memcpy(data.data(), raw.data() + off, n * sizeof(float));
        off += n * sizeof(float);
        if (i > 0 && !(prev_name < name))
            throw format_error("Checkpoint: tensor names not sorted/unique at " + name);
        prev_name = name;
        ckpt.tensors.push_back({std::move(name), std::move(shape), std::move(data)});
    }
    if (off != size) throw format_error("Checkpoint: trailing bytes in " + path);
    return ckpt;
}

} // namespace mxpp
