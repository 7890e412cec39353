#include "savid/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "savid/errors.hpp"

namespace savid {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw ValidationError("cannot open " + path.string() + " for writing");
  }
  void magic(const char (&m)[5]) { out_.write(m, 4); }
  void u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void f32(double v) {
    const auto f = static_cast<float>(v);
    out_.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
  void finish() {
    out_.flush();
    if (!out_) throw ValidationError("write to " + path_.string() + " failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ValidationError("cannot open " + path.string());
  }
  void magic(const char (&m)[5]) {
    char got[4];
    read(got, 4);
    if (std::memcmp(got, m, 4) != 0) throw ValidationError(path_.string() + ": bad magic, expected " + m);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, sizeof v);
    return v;
  }
  double f32() {
    float f;
    read(&f, sizeof f);
    return f;
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw ValidationError(path_.string() + ": trailing bytes");
  }

 private:
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw ValidationError(path_.string() + ": truncated file");
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  if (cloud.size() > UINT32_MAX) throw ValidationError("point cloud too large for SVPC");
  Writer w(path);
  w.magic("SVPC");
  w.u32(static_cast<std::uint32_t>(cloud.size()));
  for (const Point& p : cloud.points) {
    w.f32(p.x);
    w.f32(p.y);
    w.f32(p.z);
    w.f32(p.reflectance);
  }
  w.finish();
}

PointCloud load_point_cloud(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("SVPC");
  const std::uint32_t n = r.u32();
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Point p;
    p.x = r.f32();
    p.y = r.f32();
    p.z = r.f32();
    p.reflectance = r.f32();
    cloud.points.push_back(p);
  }
  r.expect_end();
  cloud.validate();
  return cloud;
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  Writer w(path);
  w.magic("SVTN");
  w.u32(static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) {
    if (d > UINT32_MAX) throw ValidationError("tensor dimension too large for SVTN");
    w.u32(static_cast<std::uint32_t>(d));
  }
  for (double v : tensor.data()) w.f32(v);
  w.finish();
}

Tensor load_tensor(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("SVTN");
  const std::uint32_t rank = r.u32();
  if (rank == 0) {
    r.expect_end();
    return {};
  }
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = r.u32();
    if (d == 0) throw ValidationError(path.string() + ": zero tensor dimension");
    shape.push_back(d);
  }
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = r.f32();
  r.expect_end();
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace savid
