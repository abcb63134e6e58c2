#include "adv/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace adv::io {

namespace {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::uint8_t get_u8(std::istream& in) {
  int c = in.get();
  if (c == EOF) fail("unexpected end of stream");
  return static_cast<std::uint8_t>(c);
}

}  // namespace

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) fail("unexpected end of stream while reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) fail("unexpected end of stream while reading f64");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_dalw(std::ostream& out, const std::vector<TensorRecord>& records) {
  out.write("DALW", 4);
  out.put(1);  // version
  for (const TensorRecord& r : records) {
    out.put(static_cast<char>(r.tag));
    out.put(static_cast<char>(r.tensor.rank()));
    for (std::size_t e : r.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (std::size_t i = 0; i < r.tensor.size(); ++i) put_f64(out, r.tensor[i]);
  }
  if (!out) fail("failed writing parameter stream");
}

std::vector<TensorRecord> read_dalw(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DALW", 4) != 0) fail("bad parameter stream magic");
  const std::uint8_t version = get_u8(in);
  if (version != 1) fail("unsupported parameter stream version " + std::to_string(version));
  std::vector<TensorRecord> records;
  for (;;) {
    int tag = in.get();
    if (tag == EOF) break;
    const std::uint8_t rank = get_u8(in);
    if (rank == 0 || rank > 4) fail("bad tensor rank in parameter stream");
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape[d] = get_u32(in);
      count *= shape[d];
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = get_f64(in);
    records.push_back({static_cast<std::uint8_t>(tag), Tensor::of(shape, std::move(values))});
  }
  return records;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 3)
    fail("write_ppm: image must be 3 x H x W, got " + image.shape_str());
  const std::size_t h = image.extent(1), w = image.extent(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open " + path.string() + " for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double v = std::llround(image.at(c, y, x));
        if (v < 0) v = 0;
        if (v > 255) v = 255;
        row[x * 3 + c] = static_cast<unsigned char>(v);
      }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail("failed writing " + path.string());
}

namespace {

int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments, then reads one unsigned integer.
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  if (c == EOF) fail("truncated PNM header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path.string());
  char p, six;
  in.get(p);
  in.get(six);
  if (p != 'P' || six != '6') fail(path.string() + ": not a binary PPM");
  const int w = read_pnm_token(in);
  const int h = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (maxval != 255) fail(path.string() + ": unsupported maxval");
  Tensor image({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) fail(path.string() + ": truncated pixel data");
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = row[x * 3 + c];
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const std::vector<int>& labels,
               int height, int width) {
  if (static_cast<std::size_t>(height) * width != labels.size())
    fail("write_pgm: label count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open " + path.string() + " for writing");
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> row(width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int v = labels[static_cast<std::size_t>(y) * width + x];
      if (v < 0 || v > 255) fail("write_pgm: label out of byte range");
      row[x] = static_cast<unsigned char>(v);
    }
    out.write(reinterpret_cast<const char*>(row.data()), width);
  }
  if (!out) fail("failed writing " + path.string());
}

std::vector<int> read_pgm(const std::filesystem::path& path, int& height, int& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path.string());
  char p, five;
  in.get(p);
  in.get(five);
  if (p != 'P' || five != '5') fail(path.string() + ": not a binary PGM");
  width = read_pnm_token(in);
  height = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (maxval != 255) fail(path.string() + ": unsupported maxval");
  std::vector<int> labels(static_cast<std::size_t>(height) * width);
  std::vector<unsigned char> row(width);
  for (int y = 0; y < height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), width);
    if (!in) fail(path.string() + ": truncated pixel data");
    for (int x = 0; x < width; ++x) labels[static_cast<std::size_t>(y) * width + x] = row[x];
  }
  return labels;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail("failed writing " + path.string());
}

}  // namespace adv::io
