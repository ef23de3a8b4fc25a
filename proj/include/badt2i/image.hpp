#pragma once

// Images are Tensors shaped [3,H,W] with values in [0,1]. PNG round trips
// through 8-bit RGB, which is the on-disk record for corpora and patches.

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

#include "badt2i/tensor.hpp"

namespace badt2i {

inline Tensor make_image(int h, int w, double fill = 0.0) { return Tensor({3, h, w}, fill); }

inline void clamp01_(Tensor& img) {
    for (size_t i = 0; i < img.size(); ++i) img[i] = std::min(1.0, std::max(0.0, img[i]));
}

inline void save_png(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3) throw IoError("save_png: expected [3,H,W]");
    int h = img.dim(1), w = img.dim(2);
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("save_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("save_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = img.at(c, y, x);
                v = std::min(1.0, std::max(0.0, v));
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Tensor load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("load_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("load_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    Tensor img = make_image(h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

// quantize to the 8-bit grid PNG storage uses, without touching disk
inline Tensor quantize_u8(const Tensor& img) {
    Tensor out = img;
    for (size_t i = 0; i < out.size(); ++i) {
        double v = std::min(1.0, std::max(0.0, out[i]));
        out[i] = std::lround(v * 255.0) / 255.0;
    }
    return out;
}

}  // namespace badt2i
