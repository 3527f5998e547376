// SPDX-License-Identifier: Apache-2.0
#include "shr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace shr {

namespace {

unsigned char to_u8(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::uint16_t to_u16(double v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

// Skips whitespace and '#' comments in a PNM header.
void skip_header_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string dummy;
      std::getline(in, dummy);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f != nullptr) {
      std::fclose(f);
    }
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  std::transform(img.values().begin(), img.values().end(), bytes.begin(), to_u8);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("short write to " + path);
  }
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path);
  }
  std::string magic;
  in >> magic;
  if (magic != "P5") {
    throw IoError(path + ": not a binary PGM (P5)");
  }
  int width = 0;
  int height = 0;
  int maxval = 0;
  skip_header_space(in);
  in >> width;
  skip_header_space(in);
  in >> height;
  skip_header_space(in);
  in >> maxval;
  in.get();
  if (!in || width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError(path + ": malformed PGM header");
  }
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> values(n);
  if (maxval < 256) {
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = bytes[i] / static_cast<double>(maxval);
    }
  } else {
    std::vector<unsigned char> bytes(2 * n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(2 * n));
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = ((bytes[2 * i] << 8) | bytes[2 * i + 1]) / static_cast<double>(maxval);
    }
  }
  if (!in) {
    throw IoError(path + ": truncated pixel data");
  }
  return Image(height, width, std::move(values));
}

void write_png16(const std::string& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) {
    throw IoError("cannot write " + path);
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng: cannot allocate write structs");
  }
  std::vector<png_byte> row(2 * static_cast<std::size_t>(img.width()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng: error writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const std::uint16_t v = to_u16(img(r, c));
      row[2 * c] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
      row[2 * c + 1] = static_cast<png_byte>(v & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) {
    throw IoError("cannot read " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng: cannot allocate read structs");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng: error reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": expected 8- or 16-bit grayscale PNG");
  }
  const std::size_t bpp = depth / 8;
  std::vector<png_byte> row(bpp * static_cast<std::size_t>(width));
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < width; ++c) {
      if (depth == 16) {
        values.push_back(((row[2 * c] << 8) | row[2 * c + 1]) / 65535.0);
      } else {
        values.push_back(row[c] / 255.0);
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return Image(height, width, std::move(values));
}

Image jpeg_roundtrip(const Image& img, int quality) {
  if (quality < 1 || quality > 100) {
    throw DomainError("jpeg quality must lie in [1, 100]");
  }
  std::vector<unsigned char> pixels(img.size());
  std::transform(img.values().begin(), img.values().end(), pixels.begin(), to_u8);

  unsigned char* encoded = nullptr;
  unsigned long encoded_size = 0;
  {
    jpeg_compress_struct cinfo{};
    jpeg_error_mgr jerr{};
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
    cinfo.image_width = static_cast<JDIMENSION>(img.width());
    cinfo.image_height = static_cast<JDIMENSION>(img.height());
    cinfo.input_components = 1;
    cinfo.in_color_space = JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width();
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }
  std::unique_ptr<unsigned char, decltype(&std::free)> owned(encoded, &std::free);

  Image out(img.height(), img.width());
  {
    jpeg_decompress_struct dinfo{};
    jpeg_error_mgr jerr{};
    dinfo.err = jpeg_std_error(&jerr);
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, owned.get(), encoded_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_GRAYSCALE;
    jpeg_start_decompress(&dinfo);
    std::vector<unsigned char> row(static_cast<std::size_t>(dinfo.output_width));
    while (dinfo.output_scanline < dinfo.output_height) {
      const int r = static_cast<int>(dinfo.output_scanline);
      JSAMPROW ptr = row.data();
      jpeg_read_scanlines(&dinfo, &ptr, 1);
      for (int c = 0; c < img.width(); ++c) {
        out(r, c) = row[static_cast<std::size_t>(c)] / 255.0;
      }
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  return out;
}

}  // namespace shr
