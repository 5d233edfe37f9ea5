#ifndef NATLAB_IMAGE_IO_HPP
#define NATLAB_IMAGE_IO_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "natlab/tensor.hpp"

namespace natlab {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int width  = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(size_t(w) * size_t(h) * 3, 0) {}

    uint8_t& at(int x, int y, int c) { return rgb[(size_t(y) * size_t(width) + size_t(x)) * 3 + size_t(c)]; }
    uint8_t at(int x, int y, int c) const { return rgb[(size_t(y) * size_t(width) + size_t(x)) * 3 + size_t(c)]; }

    void fill(uint8_t r, uint8_t g, uint8_t b) {
        for (size_t i = 0; i < rgb.size(); i += 3) {
            rgb[i]     = r;
            rgb[i + 1] = g;
            rgb[i + 2] = b;
        }
    }

    bool operator==(const Image& o) const { return width == o.width && height == o.height && rgb == o.rgb; }
};

// 8-bit grayscale image.
struct GrayImage {
    int width  = 0;
    int height = 0;
    std::vector<uint8_t> gray;

    GrayImage() = default;
    GrayImage(int w, int h) : width(w), height(h), gray(size_t(w) * size_t(h), 0) {}

    uint8_t& at(int x, int y) { return gray[size_t(y) * size_t(width) + size_t(x)]; }
    uint8_t at(int x, int y) const { return gray[size_t(y) * size_t(width) + size_t(x)]; }
};

namespace detail {

inline int read_pnm_int(std::istream& in) {
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = in.get();
        c = in.get();
    }
    int v = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
        v   = v * 10 + (c - '0');
        any = true;
        c   = in.get();
    }
    if (!any) throw std::runtime_error("pnm: malformed header");
    return v;
}

}  // namespace detail

inline void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
    if (!out) throw std::runtime_error("short write: " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char m0 = char(in.get()), m1 = char(in.get());
    if (m0 != 'P' || m1 != '6') throw std::runtime_error("not a P6 ppm: " + path);
    int w      = detail::read_pnm_int(in);
    int h      = detail::read_pnm_int(in);
    int maxval = detail::read_pnm_int(in);
    if (maxval != 255) throw std::runtime_error("unsupported maxval in: " + path);
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
    if (in.gcount() != std::streamsize(img.rgb.size())) throw std::runtime_error("truncated ppm: " + path);
    return img;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.gray.data()), std::streamsize(img.gray.size()));
    if (!out) throw std::runtime_error("short write: " + path);
}

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char m0 = char(in.get()), m1 = char(in.get());
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("not a P5 pgm: " + path);
    int w      = detail::read_pnm_int(in);
    int h      = detail::read_pnm_int(in);
    int maxval = detail::read_pnm_int(in);
    if (maxval != 255) throw std::runtime_error("unsupported maxval in: " + path);
    GrayImage img(w, h);
    in.read(reinterpret_cast<char*>(img.gray.data()), std::streamsize(img.gray.size()));
    if (in.gcount() != std::streamsize(img.gray.size())) throw std::runtime_error("truncated pgm: " + path);
    return img;
}

// u8 image -> {H, W, 3} tensor in [-1, 1]
inline Tensor image_to_tensor(const Image& img) {
    Tensor t = Tensor::zeros({img.height, img.width, 3});
    for (size_t i = 0; i < img.rgb.size(); ++i) t.data()[i] = double(img.rgb[i]) / 127.5 - 1.0;
    return t;
}

// {H, W, 3} tensor in [-1, 1] -> u8 image, values clamped
inline Image tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != 3) throw std::invalid_argument("tensor_to_image: expected {H,W,3}");
    Image img(t.dim(1), t.dim(0));
    for (size_t i = 0; i < img.rgb.size(); ++i) {
        double v   = (std::clamp(t.data()[i], -1.0, 1.0) + 1.0) * 127.5;
        img.rgb[i] = uint8_t(std::lround(v));
    }
    return img;
}

// map-normalized heatmap: min -> 0, max -> 255 (flat maps render mid-gray)
inline GrayImage heatmap_to_pgm(const Tensor& map, int rows, int cols) {
    if (int(map.numel()) != rows * cols) throw std::invalid_argument("heatmap_to_pgm: size mismatch");
    double lo = map.data()[0], hi = map.data()[0];
    for (double v : map.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    GrayImage img(cols, rows);
    for (int i = 0; i < rows * cols; ++i) {
        double v = (hi > lo) ? (map.data()[size_t(i)] - lo) / (hi - lo) : 0.5;
        img.gray[size_t(i)] = uint8_t(std::lround(v * 255.0));
    }
    return img;
}

// nearest-neighbour upscale, for making tiny heatmaps viewable
inline GrayImage upscale(const GrayImage& img, int factor) {
    GrayImage out(img.width * factor, img.height * factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(x / factor, y / factor);
    return out;
}

inline uint64_t fnv1a64(const void* bytes, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const uint8_t* p = static_cast<const uint8_t*>(bytes);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(buf.data(), buf.size());
}

}  // namespace natlab

#endif  // NATLAB_IMAGE_IO_HPP
