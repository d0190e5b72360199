#include "hecofuse/wire.hpp"

#include <cstring>
#include <string>

namespace hecofuse {

namespace {

const std::uint8_t kMagic[4] = {'H', 'C', 'F', 'M'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint8_t sensor_code(const SensorSet& s) {
    return static_cast<std::uint8_t>((s.has_lidar ? 1 : 0) |
                                     (s.has_camera ? 2 : 0));
}

}  // namespace

std::vector<std::uint8_t> encode_message(const Tensor4& features,
                                         const MessageMeta& meta) {
    if (!features.all_finite()) {
        throw DomainError("encode_message: features must be finite");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kWireHeaderSize + features.size() * 4);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kWireVersion);
    out.push_back(meta.node_id);
    out.push_back(sensor_code(meta.sensors));
    out.push_back(meta.scale);
    out.push_back(0);  // reserved
    put_u32(out, static_cast<std::uint32_t>(features.b));
    put_u32(out, static_cast<std::uint32_t>(features.c));
    put_u32(out, static_cast<std::uint32_t>(features.h));
    put_u32(out, static_cast<std::uint32_t>(features.w));
    put_u64(out, meta.timestamp_us);
    for (float v : features.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
    return out;
}

DecodedMessage decode_message(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kWireHeaderSize) {
        throw TruncatedError("decode_message: header truncated (" +
                             std::to_string(bytes.size()) + " bytes)");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw BadMagicError("decode_message: bad magic");
    }
    const std::uint16_t version = get_u16(bytes.data() + 4);
    if (version != kWireVersion) {
        throw BadVersionError("decode_message: unsupported version " +
                              std::to_string(version));
    }
    DecodedMessage msg;
    msg.meta.node_id = bytes[6];
    msg.meta.sensors = SensorSet{(bytes[7] & 1) != 0, (bytes[7] & 2) != 0};
    msg.meta.scale = bytes[8];
    const std::uint32_t b = get_u32(bytes.data() + 10);
    const std::uint32_t c = get_u32(bytes.data() + 14);
    const std::uint32_t h = get_u32(bytes.data() + 18);
    const std::uint32_t w = get_u32(bytes.data() + 22);
    msg.meta.timestamp_us = get_u64(bytes.data() + 26);
    const std::uint64_t count =
        static_cast<std::uint64_t>(b) * c * h * w;
    if (bytes.size() != kWireHeaderSize + count * 4) {
        throw TruncatedError(
            "decode_message: payload length mismatch, expected " +
            std::to_string(count * 4) + " bytes, got " +
            std::to_string(bytes.size() - kWireHeaderSize));
    }
    msg.features = Tensor4(static_cast<int>(b), static_cast<int>(c),
                           static_cast<int>(h), static_cast<int>(w));
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(bytes.data() + kWireHeaderSize + i * 4);
        float v;
        std::memcpy(&v, &bits, 4);
        msg.features.data[i] = v;
    }
    return msg;
}

}  // namespace hecofuse
