#include "sparsevb/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace sparsevb {

void write_pgm(const std::string& path, const ImageGrid& img) {
  const double lo = img.values.minCoeff(), hi = img.values.maxCoeff();
  write_pgm(path, img, lo, hi > lo ? hi : lo + 1.0);
}

void write_pgm(const std::string& path, const ImageGrid& img, double lo, double hi) {
  if (!(hi > lo)) throw std::invalid_argument("write_pgm: need hi > lo");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "P5\n" << img.p0 << ' ' << img.p0 << "\n65535\n";
  for (Eigen::Index i = 0; i < img.values.size(); ++i) {
    double t = (img.values(i) - lo) / (hi - lo);
    t = std::min(std::max(t, 0.0), 1.0);
    const auto v = std::uint16_t(std::lround(t * 65535.0));
    const unsigned char bytes[2] = {static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 2);
  }
}

namespace {

int next_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments, returns a nonnegative integer
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value;
  if (!(in >> value)) throw std::runtime_error("read_pgm: malformed header");
  return value;
}

}  // namespace

ImageGrid read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm: expected binary P5 in " + path);
  const int w = next_pnm_token(in);
  const int h = next_pnm_token(in);
  const int maxval = next_pnm_token(in);
  if (w != h) throw std::runtime_error("read_pgm: image must be square");
  if (maxval <= 0 || maxval > 65535) throw std::runtime_error("read_pgm: bad maxval");
  in.get();  // single whitespace after maxval
  ImageGrid img = ImageGrid::zero(w);
  const bool wide = maxval > 255;
  for (Eigen::Index i = 0; i < img.values.size(); ++i) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), wide ? 2 : 1);
    if (!in) throw std::runtime_error("read_pgm: truncated data in " + path);
    const unsigned v = wide ? (unsigned(b[0]) << 8 | b[1]) : unsigned(b[0]);
    img.values(i) = double(v) / double(maxval);
  }
  return img;
}

void write_grid_csv(const std::string& path, const ImageGrid& img) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "p0=" << img.p0 << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < img.values.size(); ++i) out << img.values(i) << '\n';
}

ImageGrid read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header.rfind("p0=", 0) != 0)
    throw std::runtime_error("read_grid_csv: missing p0= header in " + path);
  const int p0 = std::stoi(header.substr(3));
  ImageGrid img = ImageGrid::zero(p0);
  for (Eigen::Index i = 0; i < img.values.size(); ++i) {
    std::string line;
    if (!std::getline(in, line))
      throw std::runtime_error("read_grid_csv: expected " + std::to_string(img.values.size()) +
                               " values in " + path);
    img.values(i) = std::stod(line);
  }
  return img;
}

}  // namespace sparsevb
