#include <doctest.h>

#include <filesystem>
#include <random>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"
#include "oracles.hpp"

using namespace eventsr;
namespace fs = std::filesystem;

namespace
{

fs::path scratch(const std::string & name)
{
  const fs::path p = fs::temp_directory_path() / "eventsr_test_io" / name;
  fs::create_directories(p.parent_path());
  return p;
}

}  // namespace

TEST_CASE("EVT1 layout")
{
  const auto s = validate_stream({{7, 1, 2, -1}}, 640, 480);
  const auto b = io::encode_evt1(s);
  REQUIRE(b.size() == 4 + 2 + 2 + 8 + 13);
  CHECK(std::string(b.begin(), b.begin() + 4) == "EVT1");
  CHECK(b[4] == 0x80);
  CHECK(b[5] == 0x02);
  CHECK(b[8] == 1);
  CHECK(b[16] == 7);
  CHECK(b[24] == 1);
  CHECK(b[26] == 2);
  CHECK(static_cast<std::int8_t>(b[28]) == -1);
}

TEST_CASE("EVT1 round trip")
{
  std::mt19937_64 rng(1);
  const auto s = oracle::random_stream(rng, 1000, 64, 48);
  const auto back = io::decode_evt1(io::encode_evt1(s));
  CHECK(back.width == 64);
  CHECK(back.height == 48);
  CHECK(back.events == s.events);
  CHECK(io::encode_evt1(back) == io::encode_evt1(s));

  const auto empty = io::decode_evt1(io::encode_evt1(EventStream{{}, 3, 3}));
  CHECK(empty.empty());
}

TEST_CASE("EVT1 rejects damage")
{
  std::mt19937_64 rng(2);
  auto b = io::encode_evt1(oracle::random_stream(rng, 10, 8, 8));
  auto truncated = b;
  truncated.pop_back();
  CHECK_THROWS_AS(io::decode_evt1(truncated), DataError);
  auto bad_magic = b;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(io::decode_evt1(bad_magic), DataError);
  auto bad_polarity = b;
  bad_polarity[16 + 12] = 0;
  CHECK_THROWS_AS(io::decode_evt1(bad_polarity), InvalidEventError);
}

TEST_CASE("CSV events")
{
  std::mt19937_64 rng(3);
  const auto s = oracle::random_stream(rng, 200, 10, 10);
  const auto p = scratch("ev.csv");
  io::write_events_csv(p, s);
  const auto back = io::read_events_csv(p, 10, 10);
  CHECK(back.events == s.events);
}

TEST_CASE("TNS1 round trip in both precisions")
{
  std::mt19937_64 rng(4);
  const Tensor t = oracle::random_tensor({3, 5, 7}, rng, -2.0, 2.0);
  const Tensor d = io::decode_tns1(io::encode_tns1(t, io::DType::Float64));
  CHECK(d == t);
  const auto f32 = io::encode_tns1(t);
  CHECK(f32.size() == 4 + 1 + 1 + 3 * 4 + t.size() * 4);
  CHECK(f32[4] == 0);
  CHECK(f32[5] == 3);
  const Tensor f = io::decode_tns1(f32);
  CHECK(f.shape == t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(f.data[i] == static_cast<double>(static_cast<float>(t.data[i])));
  CHECK(io::encode_tns1(f) == f32);

  auto bad = f32;
  bad.resize(bad.size() - 1);
  CHECK_THROWS_AS(io::decode_tns1(bad), DataError);
}

TEST_CASE("PNG round trip at 16 bits")
{
  std::mt19937_64 rng(5);
  const Tensor img = oracle::random_tensor({1, 1, 9, 13}, rng);
  const auto p = scratch("img.png");
  io::write_png(p, img);
  const Tensor back = io::read_png(p);
  REQUIRE(back.shape == img.shape);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 65535 + 1e-12);

  io::write_png(p, img, 8);
  const Tensor b8 = io::read_png(p);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(b8.data[i] - img.data[i]) <= 0.5 / 255 + 1e-12);
  CHECK_THROWS(io::read_png(scratch("missing.png")));
}

TEST_CASE("atomic writes replace content")
{
  const auto p = scratch("atomic.txt");
  io::write_text_atomic(p, "one");
  io::write_text_atomic(p, "two");
  const auto b = io::read_file(p);
  CHECK(std::string(b.begin(), b.end()) == "two");
}
