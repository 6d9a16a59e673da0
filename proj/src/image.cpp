#include "acpp/image.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "acpp/common.hpp"

namespace acpp {

ImageBuffer::ImageBuffer(int h, int w, float fill) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw ShapeError("image dimensions must be positive");
    pixels.assign(size_t(h) * w * 3, fill);
}

uint8_t to_u8(float v) {
    if (!(v > 0.f)) return 0;  // also catches NaN
    if (v >= 1.f) return 255;
    return uint8_t(std::lround(double(v) * 255.0));  // lround: half away from zero
}

ImageBuffer quantize_u8(const ImageBuffer& img) {
    ImageBuffer out = img;
    for (float& v : out.pixels) v = float(to_u8(v)) / 255.f;
    return out;
}

ImageBuffer clamp01(ImageBuffer img) {
    for (float& v : img.pixels) {
        if (!(v > 0.f)) v = 0.f;
        else if (v > 1.f) v = 1.f;
    }
    return img;
}

namespace {

struct FileCloser {
    FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

ImageBuffer load_png(const std::string& path, FILE* f) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed reading " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed reading " + path);
    }
    std::vector<png_bytep> rows;
    std::vector<uint8_t> raw;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);
    const int w = int(png_get_image_width(png, info));
    const int h = int(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != 8 || color != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG (need 8-bit RGB): " + path);
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    raw.resize(size_t(h) * w * 3);
    rows.resize(size_t(h));
    for (int r = 0; r < h; ++r) rows[size_t(r)] = raw.data() + size_t(r) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageBuffer img(h, w);
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = float(raw[i]) / 255.f;
    return img;
}

void skip_ppm_space(FILE* f, const std::string& path) {
    int c;
    while ((c = std::fgetc(f)) != EOF) {
        if (c == '#') {  // comment to end of line
            while ((c = std::fgetc(f)) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            std::ungetc(c, f);
            return;
        }
    }
    throw IoError("truncated PPM header: " + path);
}

int read_ppm_int(FILE* f, const std::string& path) {
    skip_ppm_space(f, path);
    int value = 0;
    bool any = false;
    int c;
    while ((c = std::fgetc(f)) != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        if (value > 1 << 28) throw IoError("implausible PPM header value in " + path);
    }
    if (c != EOF) std::ungetc(c, f);
    if (!any) throw IoError("malformed PPM header: " + path);
    return value;
}

ImageBuffer load_ppm(const std::string& path, FILE* f) {
    const int w = read_ppm_int(f, path);
    const int h = read_ppm_int(f, path);
    const int maxval = read_ppm_int(f, path);
    if (w < 1 || h < 1) throw IoError("empty PPM image: " + path);
    if (maxval != 255) throw IoError("unsupported PPM maxval (need 255): " + path);
    int c = std::fgetc(f);
    if (c == EOF || !std::isspace(c)) throw IoError("malformed PPM header: " + path);
    ImageBuffer img(h, w);
    std::vector<uint8_t> raw(size_t(h) * w * 3);
    if (std::fread(raw.data(), 1, raw.size(), f) != raw.size())
        throw IoError("truncated PPM data: " + path);
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = float(raw[i]) / 255.f;
    return img;
}

}  // namespace

ImageBuffer load_image(const std::string& path) {
    FileCloser fc;
    fc.f = std::fopen(path.c_str(), "rb");
    if (!fc.f) throw IoError("cannot open image: " + path);
    uint8_t magic[8] = {};
    const size_t got = std::fread(magic, 1, sizeof magic, fc.f);
    static const uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) {
        std::rewind(fc.f);
        return load_png(path, fc.f);
    }
    if (got >= 2 && magic[0] == 'P' && magic[1] == '6') {
        std::fseek(fc.f, 2, SEEK_SET);
        return load_ppm(path, fc.f);
    }
    throw IoError("unrecognized image format: " + path);
}

namespace {

void save_png(const ImageBuffer& img, const std::string& path) {
    FileCloser fc;
    fc.f = std::fopen(path.c_str(), "wb");
    if (!fc.f) throw IoError("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed writing " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fc.f);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<uint8_t> row(size_t(img.width) * 3);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) row[size_t(c) * 3 + size_t(ch)] = to_u8(img.at(r, c, ch));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_ppm(const ImageBuffer& img, const std::string& path) {
    FileCloser fc;
    fc.f = std::fopen(path.c_str(), "wb");
    if (!fc.f) throw IoError("cannot write image: " + path);
    std::fprintf(fc.f, "P6\n%d %d\n255\n", img.width, img.height);
    std::vector<uint8_t> raw(img.pixels.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_u8(img.pixels[i]);
    if (std::fwrite(raw.data(), 1, raw.size(), fc.f) != raw.size())
        throw IoError("short write: " + path);
}

bool ends_with_nocase(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    for (size_t i = 0; i < suffix.size(); ++i)
        if (std::tolower(s[s.size() - suffix.size() + i]) != suffix[i]) return false;
    return true;
}

}  // namespace

void save_image(const ImageBuffer& img, const std::string& path) {
    if (img.height <= 0 || img.width <= 0 || img.pixels.size() != size_t(img.height) * img.width * 3)
        throw ShapeError("malformed image buffer for " + path);
    if (ends_with_nocase(path, ".png"))
        save_png(img, path);
    else if (ends_with_nocase(path, ".ppm"))
        save_ppm(img, path);
    else
        throw IoError("unsupported output extension (use .png or .ppm): " + path);
}

ImageBuffer rotate90(const ImageBuffer& img, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return img;
    const int h = img.height, w = img.width;
    const int oh = (k % 2 == 0) ? h : w;
    const int ow = (k % 2 == 0) ? w : h;
    ImageBuffer out(oh, ow);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            int sr, sc;
            switch (k) {
                case 1: sr = c; sc = w - 1 - r; break;
                case 2: sr = h - 1 - r; sc = w - 1 - c; break;
                default: sr = h - 1 - c; sc = r; break;
            }
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
        }
    return out;
}

Tensor<float> image_to_tensor(const ImageBuffer& img) {
    Tensor<float> t(Shape{1, 3, img.height, img.width}, 0.f);
    const size_t plane = size_t(img.height) * img.width;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch)
                t.data[size_t(ch) * plane + size_t(r) * img.width + c] = img.at(r, c, ch);
    return t;
}

ImageBuffer tensor_to_image(const Tensor<float>& t, bool clamp) {
    if (t.rank() != 4 || t.extent(0) != 1 || t.extent(1) != 3)
        throw ShapeError("expected (1,3,H,W) tensor, got " + shape_str(t.shape));
    const int h = t.extent(2), w = t.extent(3);
    ImageBuffer img(h, w);
    const size_t plane = size_t(h) * w;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = t.data[size_t(ch) * plane + size_t(r) * w + c];
    return clamp ? clamp01(std::move(img)) : img;
}

}  // namespace acpp
