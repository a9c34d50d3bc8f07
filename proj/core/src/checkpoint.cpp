#include "fdt2/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "fdt2/errors.hpp"

namespace fdt2 {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'T', '2'};

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
        }
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        auto b = take(2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t.tensor;
    }
    return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u16(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw FormatError("tensor name too long: " + name.substr(0, 32) + "...");
        }
        if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
            throw FormatError("tensor rank too large: " + name);
        }
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u8(out, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t e : t.shape()) {
            if (e > std::numeric_limits<std::uint32_t>::max()) throw FormatError("extent too large");
            put_u32(out, static_cast<std::uint32_t>(e));
        }
        for (Real v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    const auto magic = in.take(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
    const std::uint16_t version = in.u16();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = in.u32();
    Checkpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = in.u16();
        const auto name_bytes = in.take(name_len);
        std::string name(name_bytes.begin(), name_bytes.end());
        const std::uint8_t rank = in.u8();
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (auto& e : shape) {
            e = in.u32();
            n *= e;
        }
        if (n > in.remaining() / 4) {
            throw FormatError("checkpoint truncated in tensor '" + name + "'");
        }
        std::vector<Real> data(n);
        for (auto& v : data) v = static_cast<Real>(std::bit_cast<float>(in.u32()));
        ckpt.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    if (in.remaining() != 0) {
        throw FormatError("checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Checkpoint checkpoint_from_params(const ModelParams& params) {
    Checkpoint ckpt;
    for (const auto& [name, t] : params.named()) ckpt.tensors.push_back({name, *t});
    return ckpt;
}

void load_params(const Checkpoint& ckpt, ModelParams& params) {
    auto named = params.named();
    if (named.size() != ckpt.tensors.size()) {
        throw FormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                          " tensors, model expects " + std::to_string(named.size()));
    }
    for (auto& [name, t] : named) {
        const Tensor* src = ckpt.find(name);
        if (!src) throw FormatError("checkpoint is missing tensor '" + name + "'");
        if (src->shape() != t->shape()) {
            throw FormatError("tensor '" + name + "' has shape " + src->shape_string() +
                              ", model expects " + t->shape_string());
        }
        *t = *src;
    }
}

}  // namespace fdt2
