#include "pgv/pgvt_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

#include "pgv/errors.hpp"

namespace pgv {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'V', 'T'};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_bytes(std::vector<unsigned char>& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out.insert(out.end(), b, b + n);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<unsigned char>& out, float v) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(std::vector<unsigned char> bytes, std::filesystem::path path)
        : bytes_(std::move(bytes)), path_(std::move(path)) {}

    void read(void* dst, std::size_t n) {
        if (pos_ + n > bytes_.size())
            fail(ErrorKind::Format, "truncated container: " + path_.string());
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::uint16_t u16() {
        unsigned char b[2];
        read(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint8_t u8() {
        unsigned char b;
        read(&b, 1);
        return b;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    bool at_end() const { return pos_ == bytes_.size(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::vector<unsigned char> bytes_;
    std::filesystem::path path_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_pgvt(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
    std::vector<unsigned char> out;
    put_bytes(out, kMagic, 4);
    put_u32(out, kPgvtVersion);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff)
            fail(ErrorKind::Format, "entry name too long: " + e.name);
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        put_bytes(out, e.name.data(), e.name.size());
        out.push_back(static_cast<unsigned char>(e.tensor.rank()));
        for (int d : e.tensor.shape) put_u32(out, static_cast<std::uint32_t>(d));
        if constexpr (std::endian::native == std::endian::little) {
            put_bytes(out, e.tensor.data.data(), e.tensor.data.size() * 4);
        } else {
            for (float v : e.tensor.data) put_f32(out, v);
        }
    }
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
    if (std::fwrite(out.data(), 1, out.size(), f.get()) != out.size())
        fail(ErrorKind::Io, "short write: " + path.string());
}

std::vector<NamedTensor> read_pgvt(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) fail(ErrorKind::Io, "cannot open: " + path.string());
    std::fseek(f.get(), 0, SEEK_END);
    long sz = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    if (sz < 0) fail(ErrorKind::Io, "cannot stat: " + path.string());
    std::vector<unsigned char> bytes(static_cast<std::size_t>(sz));
    if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        fail(ErrorKind::Io, "short read: " + path.string());

    Reader r(std::move(bytes), path);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        fail(ErrorKind::Format, "bad magic (not a PGVT container): " + path.string());
    std::uint32_t version = r.u32();
    if (version != kPgvtVersion)
        fail(ErrorKind::Format, "unsupported container version " + std::to_string(version) +
                                    ": " + path.string());
    std::uint32_t count = r.u32();

    std::vector<NamedTensor> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t name_len = r.u16();
        std::string name(name_len, '\0');
        r.read(name.data(), name_len);
        int rank = r.u8();
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) {
            std::uint32_t e = r.u32();
            if (e == 0 || e > (1u << 30))
                fail(ErrorKind::Format, "invalid extent in entry '" + name + "': " + path.string());
            shape[static_cast<std::size_t>(d)] = static_cast<int>(e);
        }
        std::size_t n = shape_numel(shape);
        std::vector<float> data(n);
        for (std::size_t k = 0; k < n; ++k) data[k] = r.f32();
        entries.push_back({std::move(name), Tensor::of(std::move(shape), std::move(data))});
    }
    if (!r.at_end())
        fail(ErrorKind::Format, "trailing bytes after last entry: " + path.string());
    return entries;
}

const Tensor* find_entry_opt(const std::vector<NamedTensor>& entries, std::string_view name) {
    for (const auto& e : entries)
        if (e.name == name) return &e.tensor;
    return nullptr;
}

const Tensor& find_entry(const std::vector<NamedTensor>& entries, std::string_view name,
                         const std::filesystem::path& path) {
    if (const Tensor* t = find_entry_opt(entries, name)) return *t;
    fail(ErrorKind::Format, "missing entry '" + std::string(name) + "' in " + path.string());
}

}  // namespace pgv
