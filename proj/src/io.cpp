#include "tgan/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tgan {

namespace {

static_assert(std::endian::native == std::endian::little,
              "TNSR I/O assumes a little-endian host");

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw ValueError("TNSR: truncated file");
  return v;
}

}  // namespace

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  // Write to a temp file and rename so readers never see partial writes.
  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw ValueError("TNSR: cannot open for writing: " + tmp.string());
    os.write("TNSR", 4);
    write_u32(os, 1);
    const uint8_t dtype = static_cast<uint8_t>(t.dtype());
    const uint8_t ndim = static_cast<uint8_t>(t.dim());
    os.put(static_cast<char>(dtype));
    os.put(static_cast<char>(ndim));
    for (int64_t e : t.shape()) write_u32(os, static_cast<uint32_t>(e));
    if (t.dtype() == DType::f64) {
      os.write(reinterpret_cast<const char*>(t.data().data()),
               static_cast<std::streamsize>(t.data().size() * 8));
    } else {
      std::vector<float> buf(t.data().begin(), t.data().end());
      os.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!os) throw ValueError("TNSR: write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValueError("TNSR: cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0)
    throw ValueError("TNSR: bad magic in " + path.string());
  const uint32_t version = read_u32(is);
  if (version != 1)
    throw ValueError("TNSR: unsupported version " + std::to_string(version));
  const int dtype_byte = is.get();
  const int ndim = is.get();
  if (dtype_byte < 0 || ndim < 0) throw ValueError("TNSR: truncated header");
  if (dtype_byte > 1)
    throw ValueError("TNSR: unknown dtype byte " + std::to_string(dtype_byte));
  if (ndim == 0) throw ValueError("TNSR: empty dims rejected");
  Shape shape;
  for (int i = 0; i < ndim; ++i)
    shape.push_back(static_cast<int64_t>(read_u32(is)));
  check_shape(shape);
  const DType dtype = static_cast<DType>(dtype_byte);
  const size_t count = static_cast<size_t>(numel(shape));
  std::vector<double> values(count);
  if (dtype == DType::f64) {
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * 8));
  } else {
    std::vector<float> buf(count);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(count * 4));
    std::copy(buf.begin(), buf.end(), values.begin());
  }
  if (!is) throw ValueError("TNSR: truncated payload in " + path.string());
  return from_data(shape, std::move(values), dtype);
}

}  // namespace tgan
