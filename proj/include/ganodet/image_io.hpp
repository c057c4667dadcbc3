#pragma once

#include <jpeglib.h>
#include <png.h>

#include <cstdio>
#include <csetjmp>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "ganodet/common.hpp"
#include "ganodet/tensor.hpp"

namespace ganodet {

// 8-bit image in interleaved row-major layout, 1 or 3 channels.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<unsigned char> pixels;  // height * width * channels

    unsigned char& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    unsigned char at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

namespace detail {

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

inline Image8 load_png(const std::string& path) {
    FileHandle fh(path, "rb");
    if (!fh.f) throw IoError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed for " + path);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png decode failed: " + path);
    }
    png_init_io(png, fh.f);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    Image8 img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    if (img.channels != 1 && img.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported png channel count in " + path);
    }
    img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void save_png(const std::string& path, const Image8& img) {
    FileHandle fh(path, "wb");
    if (!fh.f) throw IoError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed for " + path);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png encode failed: " + path);
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.pixels.data()) +
                  static_cast<std::size_t>(y) * img.width * img.channels;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

inline Image8 load_jpeg(const std::string& path) {
    FileHandle fh(path, "rb");
    if (!fh.f) throw IoError("cannot open " + path);
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("jpeg decode failed: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fh.f);
    jpeg_read_header(&cinfo, TRUE);
    jpeg_start_decompress(&cinfo);
    Image8 img;
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.channels = cinfo.output_components;
    if (img.channels != 1 && img.channels != 3) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("unsupported jpeg channel count in " + path);
    }
    img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() +
                       static_cast<std::size_t>(cinfo.output_scanline) * img.width * img.channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

inline void save_jpeg(const std::string& path, const Image8& img, int quality = 95) {
    FileHandle fh(path, "wb");
    if (!fh.f) throw IoError("cannot write " + path);
    jpeg_compress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw IoError("jpeg encode failed: " + path);
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, fh.f);
    cinfo.image_width = static_cast<JDIMENSION>(img.width);
    cinfo.image_height = static_cast<JDIMENSION>(img.height);
    cinfo.input_components = img.channels;
    cinfo.in_color_space = img.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(img.pixels.data()) +
                       static_cast<std::size_t>(cinfo.next_scanline) * img.width * img.channels;
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

inline Image8 load_pnm(const std::string& path) {
    FileHandle fh(path, "rb");
    if (!fh.f) throw IoError("cannot open " + path);
    char magic[3] = {};
    if (std::fscanf(fh.f, "%2s", magic) != 1) throw IoError("bad pnm header: " + path);
    int channels;
    if (std::strcmp(magic, "P5") == 0)
        channels = 1;
    else if (std::strcmp(magic, "P6") == 0)
        channels = 3;
    else
        throw IoError("unsupported pnm magic in " + path);
    int w, h, maxval;
    if (std::fscanf(fh.f, "%d %d %d", &w, &h, &maxval) != 3 || maxval != 255)
        throw IoError("bad pnm header: " + path);
    std::fgetc(fh.f);  // single whitespace after maxval
    Image8 img;
    img.width = w;
    img.height = h;
    img.channels = channels;
    img.pixels.resize(static_cast<std::size_t>(w) * h * channels);
    if (std::fread(img.pixels.data(), 1, img.pixels.size(), fh.f) != img.pixels.size())
        throw IoError("truncated pnm file: " + path);
    return img;
}

inline void save_pnm(const std::string& path, const Image8& img) {
    FileHandle fh(path, "wb");
    if (!fh.f) throw IoError("cannot write " + path);
    std::fprintf(fh.f, "%s\n%d %d\n255\n", img.channels == 1 ? "P5" : "P6", img.width, img.height);
    std::fwrite(img.pixels.data(), 1, img.pixels.size(), fh.f);
}

inline std::string lower_ext(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    return ext;
}

}  // namespace detail

inline Image8 load_image(const std::string& path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".png") return detail::load_png(path);
    if (ext == ".jpg" || ext == ".jpeg") return detail::load_jpeg(path);
    if (ext == ".ppm" || ext == ".pgm") return detail::load_pnm(path);
    throw IoError("unsupported image format: " + path);
}

inline void save_image(const std::string& path, const Image8& img) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".png")
        detail::save_png(path, img);
    else if (ext == ".jpg" || ext == ".jpeg")
        detail::save_jpeg(path, img);
    else if (ext == ".ppm" || ext == ".pgm")
        detail::save_pnm(path, img);
    else
        throw IoError("unsupported image format: " + path);
}

// Image8 -> (C, H, W) tensor in [-1, 1]. Grayscale images may be replicated
// to 3 channels so one network configuration covers all datasets.
inline Tensor image_to_tensor(const Image8& img, int want_channels) {
    Tensor t({want_channels, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < want_channels; ++c) {
                const int src_c = img.channels == 1 ? 0 : std::min(c, img.channels - 1);
                t.at3(c, y, x) = img.at(y, x, src_c) / 255.0 * 2.0 - 1.0;
            }
    return t;
}

inline Image8 tensor_to_image(const Tensor& t) {
    check_shape(t.shape.size() == 3 && (t.shape[0] == 1 || t.shape[0] == 3), "tensor_to_image");
    Image8 img;
    img.channels = t.shape[0];
    img.height = t.shape[1];
    img.width = t.shape[2];
    img.pixels.resize(t.numel());
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double v = (t.at3(c, y, x) + 1.0) / 2.0 * 255.0;
                img.at(y, x, c) = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0) + 0.5);
            }
    return img;
}

}  // namespace ganodet
