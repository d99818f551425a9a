#include "prgflow/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

// jpeglib.h expects FILE and size_t to be declared first.
#include <jpeglib.h>

#include "prgflow/errors.hpp"

namespace prgflow {
namespace {

ImagePlane from_interleaved(const std::vector<unsigned char>& buf, int width, int height, int channels) {
  const int out_channels = channels >= 3 ? 3 : 1;
  ImagePlane img(width, height, out_channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < out_channels; ++c)
        img.at(c, y, x) = buf[(std::size_t(y) * width + x) * channels + c] / 255.0;
  return img;
}

ImagePlane read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("cannot read PNG '" + path.string() + "': " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  return from_interleaved(buf, static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1);
}

struct JpegErrorMgr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

ImagePlane read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw DataError("cannot open JPEG '" + path.string() + "'");
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<unsigned char> buf;
  int w = 0, h = 0, nc = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("cannot decode JPEG '" + path.string() + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 1) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  nc = cinfo.output_components;
  buf.resize(std::size_t(w) * h * nc);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + std::size_t(cinfo.output_scanline) * w * nc;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(buf, w, h, nc);
}

}  // namespace

ImagePlane read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path.string() + "'");
  unsigned char magic[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(magic), 4);
  if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G') return read_png(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
  throw DataError("unsupported image format (expected PNG or JPEG): '" + path.string() + "'");
}

void write_png(const std::filesystem::path& path, const ImagePlane& img) {
  const int nc = img.channel_count();
  if (nc != 1 && nc != 3) throw ShapeError("write_png supports 1 or 3 channels");
  std::vector<unsigned char> buf(std::size_t(img.width()) * img.height() * nc);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < nc; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        buf[(std::size_t(y) * img.width() + x) * nc + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = nc == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw DataError("cannot write PNG '" + path.string() + "': " + image.message);
}

}  // namespace prgflow
