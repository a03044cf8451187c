#include "eventsr/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "eventsr/error.hpp"

namespace eventsr::io
{

namespace fs = std::filesystem;

namespace
{

template <class T>
void put(Bytes & out, T value)
{
  using U = std::make_unsigned_t<T>;
  const U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

class Reader
{
public:
  Reader(const Bytes & bytes, const char * format) : bytes_(bytes), format_(format) {}

  template <class T>
  T get()
  {
    using U = std::make_unsigned_t<T>;
    need(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  void expect_magic(const char * magic)
  {
    need(4);
    if (std::memcmp(bytes_.data(), magic, 4) != 0)
      throw DataError(std::string(format_) + ": bad magic");
    pos_ = 4;
  }

  void need(std::size_t n) const
  {
    if (pos_ + n > bytes_.size()) throw DataError(std::string(format_) + ": truncated data");
  }

  bool at_end() const { return pos_ == bytes_.size(); }

private:
  const Bytes & bytes_;
  const char * format_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes read_file(const fs::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const fs::path & path, const Bytes & bytes)
{
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path & path, const std::string & text)
{
  write_file_atomic(path, Bytes(text.begin(), text.end()));
}

Bytes encode_evt1(const EventStream & stream)
{
  if (stream.width > 0xFFFF || stream.height > 0xFFFF) throw DataError("EVT1: geometry exceeds u16");
  Bytes out{'E', 'V', 'T', '1'};
  out.reserve(16 + stream.size() * 13);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(stream.width));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(stream.height));
  put<std::uint64_t>(out, stream.size());
  for (const Event & e : stream.events) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.t));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.x));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.y));
    put<std::int8_t>(out, static_cast<std::int8_t>(e.p));
  }
  return out;
}

EventStream decode_evt1(const Bytes & bytes)
{
  Reader r(bytes, "EVT1");
  r.expect_magic("EVT1");
  const int width = r.get<std::uint16_t>();
  const int height = r.get<std::uint16_t>();
  const auto count = r.get<std::uint64_t>();
  r.need(count * 13);
  std::vector<Event> events(count);
  for (auto & e : events) {
    e.t = static_cast<std::int64_t>(r.get<std::uint64_t>());
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    e.p = r.get<std::int8_t>();
  }
  if (!r.at_end()) throw DataError("EVT1: trailing bytes");
  return validate_stream(std::move(events), width, height);
}

void write_evt1(const fs::path & path, const EventStream & stream)
{
  write_file_atomic(path, encode_evt1(stream));
}

EventStream read_evt1(const fs::path & path) { return decode_evt1(read_file(path)); }

void write_events_csv(const fs::path & path, const EventStream & stream)
{
  std::ostringstream os;
  os << "# t,x,y,p\n";
  for (const Event & e : stream.events) os << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
  write_text_atomic(path, os.str());
}

EventStream read_events_csv(const fs::path & path, int width, int height)
{
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Event> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    Event e;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream ls(line);
    if (!(ls >> e.t >> c1 >> e.x >> c2 >> e.y >> c3 >> e.p) || c1 != ',' || c2 != ',' || c3 != ',')
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed event line");
    events.push_back(e);
  }
  return validate_stream(std::move(events), width, height);
}

Bytes encode_tns1(const Tensor & t, DType dtype)
{
  if (t.rank() > 255) throw DataError("TNS1: rank exceeds u8");
  Bytes out{'T', 'N', 'S', '1'};
  put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (int d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  if (dtype == DType::Float32) {
    for (double v : t.data) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    for (double v : t.data) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Tensor decode_tns1(const Bytes & bytes)
{
  Reader r(bytes, "TNS1");
  r.expect_magic("TNS1");
  const auto dtype = r.get<std::uint8_t>();
  if (dtype > 1) throw DataError("TNS1: unknown dtype code " + std::to_string(dtype));
  const int ndim = r.get<std::uint8_t>();
  std::vector<int> shape(static_cast<std::size_t>(ndim));
  for (int & d : shape) {
    const auto v = r.get<std::uint32_t>();
    if (v > 0x7FFFFFFFu) throw DataError("TNS1: dimension too large");
    d = static_cast<int>(v);
  }
  Tensor t(shape);
  r.need(t.size() * (dtype == 0 ? 4 : 8));
  for (double & v : t.data) {
    v = dtype == 0 ? static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()))
                   : std::bit_cast<double>(r.get<std::uint64_t>());
  }
  if (!r.at_end()) throw DataError("TNS1: trailing bytes");
  return t;
}

void write_tns1(const fs::path & path, const Tensor & t, DType dtype)
{
  write_file_atomic(path, encode_tns1(t, dtype));
}

Tensor read_tns1(const fs::path & path) { return decode_tns1(read_file(path)); }

namespace
{

struct FileCloser
{
  void operator()(FILE * f) const { std::fclose(f); }
};

}  // namespace

Tensor read_png(const fs::path & path)
{
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("invalid PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor img = Tensor::image(height, width);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t * row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      img.at(0, 0, y, x) = depth == 16 ? ((row[2 * x] << 8) | row[2 * x + 1]) / 65535.0 : row[x] / 255.0;
    }
  }
  return img;
}

void write_png(const fs::path & path, const Tensor & image, int bit_depth)
{
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("PNG bit depth must be 8 or 16");
  if (image.rank() < 2) throw std::invalid_argument("write_png: rank < 2");
  for (int i = 0; i + 2 < image.rank(); ++i)
    if (image.dim(i) != 1) throw std::invalid_argument("write_png: expected a single-channel image");
  const int height = image.dim(image.rank() - 2);
  const int width = image.dim(image.rank() - 1);
  const int bpp = bit_depth / 8;
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(width) * height * bpp);
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * maxv));
    if (bpp == 2) {
      buffer[2 * i] = static_cast<std::uint8_t>(q >> 8);
      buffer[2 * i + 1] = static_cast<std::uint8_t>(q & 0xFF);
    } else {
      buffer[i] = static_cast<std::uint8_t>(q);
    }
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw DataError("cannot write " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw DataError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw DataError("PNG write failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
      png_write_row(png, buffer.data() + static_cast<std::size_t>(y) * width * bpp);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  fs::rename(tmp, path);
}

}  // namespace eventsr::io
