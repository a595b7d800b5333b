#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "tgan/io.hpp"

using namespace tgan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "tgan_io_tests";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("tensor file round trip preserves values bitwise (f64)") {
  Rng rng(11);
  Tensor t = uniform({3, 5, 7}, -2.0, 2.0, rng);
  const auto path = temp_dir() / "roundtrip_f64.tnsr";
  save_tensor(path, t);
  Tensor back = load_tensor(path);
  CHECK(back.shape() == t.shape());
  CHECK(back.dtype() == DType::f64);
  for (size_t i = 0; i < t.data().size(); ++i)
    CHECK(back.data()[i] == t.data()[i]);
}

TEST_CASE("f32 tensors round trip exactly because values are quantized") {
  Rng rng(12);
  Tensor t = uniform({4, 4}, -1.0, 1.0, rng, DType::f32);
  const auto path = temp_dir() / "roundtrip_f32.tnsr";
  save_tensor(path, t);
  Tensor back = load_tensor(path);
  CHECK(back.dtype() == DType::f32);
  for (size_t i = 0; i < t.data().size(); ++i)
    CHECK(back.data()[i] == t.data()[i]);
}

TEST_CASE("header layout is exactly magic/version/dtype/ndim/extents") {
  Tensor t = from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto path = temp_dir() / "header.tnsr";
  save_tensor(path, t);
  std::ifstream is(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 4u + 4u + 1u + 1u + 2u * 4u + 6u * 8u);
  CHECK(std::string(bytes.data(), 4) == "TNSR");
  CHECK(bytes[4] == 1);  // version u32 LE
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 1);   // dtype f64
  CHECK(bytes[9] == 2);   // ndim
  CHECK(bytes[10] == 2);  // extent 0
  CHECK(bytes[14] == 3);  // extent 1
}

TEST_CASE("bad magic is rejected") {
  const auto path = temp_dir() / "bad_magic.tnsr";
  std::ofstream(path, std::ios::binary) << "NOPE1234567890";
  CHECK_THROWS_AS(load_tensor(path), ValueError);
}

TEST_CASE("truncated payload is rejected") {
  Tensor t = ones({4, 4});
  const auto path = temp_dir() / "trunc.tnsr";
  save_tensor(path, t);
  const auto cut = temp_dir() / "trunc_cut.tnsr";
  {
    std::ifstream is(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                            std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 12);
    std::ofstream os(cut, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_tensor(cut), ValueError);
}

TEST_CASE("unknown dtype byte is rejected") {
  Tensor t = ones({2});
  const auto path = temp_dir() / "dtype.tnsr";
  save_tensor(path, t);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    f.put(7);
  }
  CHECK_THROWS_AS(load_tensor(path), ValueError);
}

TEST_CASE("zero-dimension headers are rejected") {
  const auto path = temp_dir() / "ndim0.tnsr";
  {
    std::ofstream os(path, std::ios::binary);
    os << "TNSR";
    const uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.put(1);  // dtype f64
    os.put(0);  // ndim 0
  }
  CHECK_THROWS_AS(load_tensor(path), ValueError);
}

TEST_CASE("missing files raise ValueError") {
  CHECK_THROWS_AS(load_tensor(temp_dir() / "does_not_exist.tnsr"), ValueError);
}

TEST_CASE("saving never leaves a temp file behind") {
  const auto path = temp_dir() / "atomic.tnsr";
  save_tensor(path, ones({3}));
  CHECK(fs::exists(path));
  CHECK_FALSE(fs::exists(temp_dir() / "atomic.tnsr.tmp"));
}
