// Copyright Contributors to the apfield Project
// SPDX-License-Identifier: Apache-2.0

#include "apf/image_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <png.h>

namespace apf {

namespace {

void write_pfm_payload(const std::string& path, const char* kind, int height, int width,
                       const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("pfm: cannot open for write: " + path);
  out << kind << "\n" << width << " " << height << "\n" << "-1.0" << "\n";
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("pfm: write failed: " + path);
}

struct PfmPayload {
  bool color = false;
  int width = 0, height = 0;
  std::vector<float> data;  // bottom-up rows as stored
};

PfmPayload read_pfm_payload(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pfm: cannot open: " + path);
  std::string kind;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> kind >> width >> height >> scale;
  if (!in || (kind != "PF" && kind != "Pf"))
    throw std::runtime_error("pfm: bad header: " + path);
  if (width < 1 || height < 1) throw std::runtime_error("pfm: bad dimensions: " + path);
  if (scale >= 0.0)
    throw std::runtime_error("pfm: big-endian payloads are not supported: " + path);
  in.get();  // single whitespace byte terminating the header

  PfmPayload p;
  p.color = kind == "PF";
  p.width = width;
  p.height = height;
  const size_t n = static_cast<size_t>(width) * height * (p.color ? 3 : 1);
  p.data.resize(n);
  in.read(reinterpret_cast<char*>(p.data.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != n * sizeof(float))
    throw std::runtime_error("pfm: truncated payload: " + path);
  return p;
}

}  // namespace

void write_pfm(const std::string& path, const Image<double>& img) {
  const int h = img.height(), w = img.width();
  if (h < 1 || w < 1) throw std::invalid_argument("write_pfm: empty image");
  std::vector<float> data(static_cast<size_t>(h) * w * 3);
  size_t i = 0;
  for (int r = h - 1; r >= 0; --r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) data[i++] = static_cast<float>(img.ch[ch](r, c));
  write_pfm_payload(path, "PF", h, w, data);
}

Image<double> read_pfm(const std::string& path) {
  const PfmPayload p = read_pfm_payload(path);
  if (!p.color) throw std::runtime_error("pfm: expected color image: " + path);
  Image<double> img(p.height, p.width);
  size_t i = 0;
  for (int r = p.height - 1; r >= 0; --r)
    for (int c = 0; c < p.width; ++c)
      for (int ch = 0; ch < 3; ++ch) img.ch[ch](r, c) = p.data[i++];
  return img;
}

void write_depth_pfm(const std::string& path, const DepthMap<double>& depth) {
  const int h = depth.height(), w = depth.width();
  if (h < 1 || w < 1) throw std::invalid_argument("write_depth_pfm: empty depth map");
  std::vector<float> data(static_cast<size_t>(h) * w);
  size_t i = 0;
  for (int r = h - 1; r >= 0; --r)
    for (int c = 0; c < w; ++c)
      data[i++] = depth.valid(r, c) ? static_cast<float>(depth.values(r, c)) : -1.0f;
  write_pfm_payload(path, "Pf", h, w, data);
}

DepthMap<double> read_depth_pfm(const std::string& path) {
  const PfmPayload p = read_pfm_payload(path);
  if (p.color) throw std::runtime_error("pfm: expected grayscale depth: " + path);
  DepthMap<double> depth(p.height, p.width);
  size_t i = 0;
  for (int r = p.height - 1; r >= 0; --r)
    for (int c = 0; c < p.width; ++c) {
      const float v = p.data[i++];
      const bool ok = std::isfinite(v) && v > 0.0f;
      depth.values(r, c) = ok ? v : -1.0;
      depth.valid(r, c) = ok;
    }
  return depth;
}

void write_png(const std::string& path, const Image<double>& img) {
  const int h = img.height(), w = img.width();
  if (h < 1 || w < 1) throw std::invalid_argument("write_png: empty image");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("png: cannot open for write: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png: initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png: write failed: " + path);
  }

  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<size_t>(w) * 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::min(1.0, std::max(0.0, img.ch[ch](r, c)));
        row[static_cast<size_t>(c) * 3 + ch] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace apf
