#include "bdcn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& s) : s_(s) {}

    void need(std::size_t n) const {
        if (s_.size() - pos_ < n) throw IntegrityError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_++])) << (8 * i);
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string raw(std::size_t n) {
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    [[nodiscard]] bool done() const { return pos_ == s_.size(); }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
};

} // namespace

const std::string* Checkpoint::find_meta(const std::string& key) const {
    for (const auto& [k, v] : metadata) {
        if (k == key) return &v;
    }
    return nullptr;
}

const NamedTensor* Checkpoint::find_record(const std::string& name) const {
    for (const auto& r : records) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.u32(kCheckpointVersion);
    w.u64(ckpt.records.size());
    w.u64(ckpt.metadata.size());
    for (const auto& [k, v] : ckpt.metadata) {
        w.str(k);
        w.str(v);
    }
    for (const auto& r : ckpt.records) {
        w.str(r.name);
        const Shape& s = r.tensor.shape();
        w.u64(4);
        for (std::int64_t d : {s.n, s.c, s.h, s.w}) w.u64(static_cast<std::uint64_t>(d));
        for (float f : r.tensor.data()) w.f32(f);
    }
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.raw(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
        throw IntegrityError("not a checkpoint: bad magic bytes");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint out;
    const std::uint64_t count = r.u64();
    const std::uint64_t meta = r.u64();
    for (std::uint64_t i = 0; i < meta; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        out.metadata.emplace_back(std::move(k), std::move(v));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor rec;
        rec.name = r.str();
        const std::uint64_t rank = r.u64();
        if (rank < 1 || rank > 4) throw IntegrityError("record '" + rec.name + "' has rank " + std::to_string(rank));
        std::int64_t dims[4] = {1, 1, 1, 1};
        std::uint64_t total = 1;
        for (std::uint64_t d = 0; d < rank; ++d) {
            const std::uint64_t v = r.u64();
            if (v == 0 || v > (std::uint64_t{1} << 40)) throw IntegrityError("record '" + rec.name + "' has invalid dim");
            dims[4 - rank + d] = static_cast<std::int64_t>(v);
            total *= v;
        }
        r.need(total * 4);
        std::vector<float> data(total);
        for (auto& f : data) f = r.f32();
        rec.tensor = Tensor::from_data(Shape{dims[0], dims[1], dims[2], dims[3]}, std::move(data));
        out.records.push_back(std::move(rec));
    }
    if (!r.done()) throw IntegrityError("trailing bytes after last checkpoint record");
    return out;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    const std::string bytes = serialize_checkpoint(ckpt);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

} // namespace bdcn
