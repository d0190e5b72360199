#pragma once

#include <cstdint>
#include <vector>

#include "hecofuse/node_fusion.hpp"
#include "hecofuse/tensor.hpp"

namespace hecofuse {

// Inter-node BEV feature payload. Byte layout (all little-endian, header
// 34 bytes, documented in docs/wire_format.md):
//   0   magic "HCFM"
//   4   version        u16
//   6   node_id        u8
//   7   sensor code    u8   (bit 0 lidar, bit 1 camera)
//   8   scale          u8
//   9   reserved       u8   (zero)
//   10  batch          u32
//   14  channels       u32
//   18  height         u32
//   22  width          u32
//   26  timestamp_us   u64
//   34  payload        batch*channels*height*width f32, row-major, width
//                      fastest
struct MessageMeta {
    std::uint8_t node_id = 0;
    SensorSet sensors;
    std::uint8_t scale = 1;
    std::uint64_t timestamp_us = 0;
};

inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr std::size_t kWireHeaderSize = 34;

std::vector<std::uint8_t> encode_message(const Tensor4& features,
                                         const MessageMeta& meta);

struct DecodedMessage {
    Tensor4 features;
    MessageMeta meta;
};

// Throws BadMagicError / BadVersionError / TruncatedError on the three
// corruption classes.
DecodedMessage decode_message(const std::vector<std::uint8_t>& bytes);

}  // namespace hecofuse
