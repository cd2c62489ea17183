#include "safepaint/io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace safepaint::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return f;
}

// Decodes to 8-bit gray or RGB rows; alpha and 16-bit depth are stripped.
struct RawPng {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;
};

RawPng read_raw_png(const std::string& path) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  RawPng raw;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("malformed PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
  png_read_update_info(png, info);
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.pixels.resize(static_cast<size_t>(raw.width) * raw.height * raw.channels);
  rows.resize(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = raw.pixels.data() + static_cast<size_t>(y) * raw.width * raw.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

void write_raw_png(const std::string& path, int width, int height, int channels, const std::vector<std::uint8_t>& px) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_const_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) rows[y] = px.data() + static_cast<size_t>(y) * width * channels;
  png_write_rows(png, const_cast<png_bytepp>(rows.data()), height);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> interleave(const Image& img) {
  std::vector<std::uint8_t> px(img.data.size());
  const size_t plane = img.plane_size();
  for (size_t i = 0; i < plane; ++i)
    for (int c = 0; c < img.channels; ++c) px[i * img.channels + c] = quantize(img.data[c * plane + i]);
  return px;
}

Image deinterleave(int height, int width, int channels, const std::uint8_t* px) {
  Image img(height, width, channels);
  const size_t plane = img.plane_size();
  for (size_t i = 0; i < plane; ++i)
    for (int c = 0; c < channels; ++c) img.data[c * plane + i] = px[i * channels + c] / 255.0;
  return img;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image read_png(const std::string& path) {
  RawPng raw = read_raw_png(path);
  return deinterleave(raw.height, raw.width, raw.channels == 1 ? 1 : 3, raw.pixels.data());
}

void write_png(const std::string& path, const Image& img) {
  write_raw_png(path, img.width, img.height, img.channels, interleave(img));
}

Mask read_mask_png(const std::string& path) {
  RawPng raw = read_raw_png(path);
  Mask m(raw.height, raw.width);
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = raw.pixels[i * raw.channels] >= 128 ? 1 : 0;
  return m;
}

void write_mask_png(const std::string& path, const Mask& m) {
  std::vector<std::uint8_t> px(m.data.size());
  std::transform(m.data.begin(), m.data.end(), px.begin(), [](std::uint8_t v) { return v ? 255 : 0; });
  write_raw_png(path, m.width, m.height, 1, px);
}

std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must lie in [1,100]");
  std::vector<std::uint8_t> px = interleave(img);
  jpeg_compress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw std::runtime_error("JPEG encoding failed");
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = img.channels;
  cinfo.in_color_space = img.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_compress(&cinfo, TRUE);
  const int stride = img.width * img.channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = px.data() + static_cast<size_t>(cinfo.next_scanline) * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

Image decode_jpeg(const std::vector<std::uint8_t>& bytes) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error("JPEG decoding failed");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width), h = static_cast<int>(cinfo.output_height);
  const int c = cinfo.output_components;
  std::vector<std::uint8_t> px(static_cast<size_t>(w) * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return deinterleave(h, w, c, px.data());
}

}  // namespace safepaint::io
