#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eventsr/event_core.hpp"
#include "eventsr/tensor.hpp"

namespace eventsr::io
{

using Bytes = std::vector<std::uint8_t>;

// EVT1: "EVT1", u16 width, u16 height, u64 count, then packed records of
// u64 t, u16 x, u16 y, i8 p. Little-endian throughout.
Bytes encode_evt1(const EventStream & stream);
EventStream decode_evt1(const Bytes & bytes);
void write_evt1(const std::filesystem::path & path, const EventStream & stream);
EventStream read_evt1(const std::filesystem::path & path);

// CSV: one "t,x,y,p" line per event; lines starting with '#' are skipped.
void write_events_csv(const std::filesystem::path & path, const EventStream & stream);
EventStream read_events_csv(const std::filesystem::path & path, int width, int height);

// TNS1: "TNS1", u8 dtype, u8 ndim, u32 dims[ndim], row-major little-endian payload.
enum class DType : std::uint8_t { Float32 = 0, Float64 = 1 };

Bytes encode_tns1(const Tensor & t, DType dtype = DType::Float32);
Tensor decode_tns1(const Bytes & bytes);
void write_tns1(const std::filesystem::path & path, const Tensor & t, DType dtype = DType::Float32);
Tensor read_tns1(const std::filesystem::path & path);

/// Grayscale PNG in, 1x1xHxW tensor in [0,1] out. Colour inputs are converted to gray.
Tensor read_png(const std::filesystem::path & path);
/// Writes a 1x1xHxW (or 1xHxW / HxW) tensor as 8- or 16-bit grayscale, clamped to [0,1].
void write_png(const std::filesystem::path & path, const Tensor & image, int bit_depth = 16);

Bytes read_file(const std::filesystem::path & path);
/// Writes to a sibling temporary file then renames it into place.
void write_file_atomic(const std::filesystem::path & path, const Bytes & bytes);
void write_text_atomic(const std::filesystem::path & path, const std::string & text);

}  // namespace eventsr::io
