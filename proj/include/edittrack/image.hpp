#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edittrack/error.hpp"

namespace edittrack {

// Canonical side length images are normalized to before similarity metrics.
inline constexpr int kCanonicalSide = 256;

// 8-bit RGB image, row-major, interleaved channels.
class ImageBuffer {
public:
    static constexpr int kChannels = 3;

    ImageBuffer() = default;

    ImageBuffer(int width, int height, std::uint8_t fill = 0)
        : width_(width), height_(height) {
        check_dims(width, height);
        data_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
    }

    ImageBuffer(int width, int height, std::vector<std::uint8_t> data)
        : width_(width), height_(height), data_(std::move(data)) {
        check_dims(width, height);
        if (data_.size() != static_cast<std::size_t>(width) * height * kChannels)
            throw PreconditionError("image data length does not match " + std::to_string(width) +
                                    "x" + std::to_string(height) + "x3");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    std::uint8_t at(int x, int y, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
    }
    std::uint8_t& at(int x, int y, int c) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
    }

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels];
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    static void check_dims(int w, int h) {
        if (w < 1 || h < 1)
            throw PreconditionError("image dimensions must be >= 1, got " + std::to_string(w) + "x" +
                                    std::to_string(h));
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Single-channel floating point plane used by the grayscale metrics.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Plane() = default;
    Plane(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline std::uint8_t clamp_to_byte(double v) {
    // round half up, then saturate
    const double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

inline double bt601_luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline Plane to_luma(const ImageBuffer& img) {
    Plane out(img.width(), img.height());
    auto src = img.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        out.values[i] = bt601_luma(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
    return out;
}

namespace detail {

// Half-pixel-center source coordinate for output index `i`, clamped to the
// valid range, split into (lower index, upper index, fraction).
struct Tap {
    int lo;
    int hi;
    double frac;
};

inline std::vector<Tap> bilinear_taps(int src, int dst) {
    std::vector<Tap> taps(dst);
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double s = (i + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        const int lo = static_cast<int>(std::floor(s));
        taps[i] = {lo, std::min(lo + 1, src - 1), s - lo};
    }
    return taps;
}

}  // namespace detail

// Bilinear resize with half-pixel-center sampling and round-half-up output.
// A same-size resize is the identity.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height) {
    if (width < 1 || height < 1) throw PreconditionError("resize target must be >= 1x1");
    if (width == img.width() && height == img.height()) return img;
    const auto tx = detail::bilinear_taps(img.width(), width);
    const auto ty = detail::bilinear_taps(img.height(), height);
    ImageBuffer out(width, height);
    for (int y = 0; y < height; ++y) {
        const auto& ry = ty[y];
        for (int x = 0; x < width; ++x) {
            const auto& rx = tx[x];
            for (int c = 0; c < 3; ++c) {
                const double top = img.at(rx.lo, ry.lo, c) * (1.0 - rx.frac) + img.at(rx.hi, ry.lo, c) * rx.frac;
                const double bot = img.at(rx.lo, ry.hi, c) * (1.0 - rx.frac) + img.at(rx.hi, ry.hi, c) * rx.frac;
                out.at(x, y, c) = clamp_to_byte(top * (1.0 - ry.frac) + bot * ry.frac);
            }
        }
    }
    return out;
}

inline Plane resize_bilinear(const Plane& p, int width, int height) {
    if (width < 1 || height < 1) throw PreconditionError("resize target must be >= 1x1");
    if (width == p.width && height == p.height) return p;
    const auto tx = detail::bilinear_taps(p.width, width);
    const auto ty = detail::bilinear_taps(p.height, height);
    Plane out(width, height);
    for (int y = 0; y < height; ++y) {
        const auto& ry = ty[y];
        for (int x = 0; x < width; ++x) {
            const auto& rx = tx[x];
            const double top = p.at(rx.lo, ry.lo) * (1.0 - rx.frac) + p.at(rx.hi, ry.lo) * rx.frac;
            const double bot = p.at(rx.lo, ry.hi) * (1.0 - rx.frac) + p.at(rx.hi, ry.hi) * rx.frac;
            out.at(x, y) = top * (1.0 - ry.frac) + bot * ry.frac;
        }
    }
    return out;
}

// Square resize used before every similarity computation.
inline ImageBuffer resize_canonical(const ImageBuffer& img, int side = kCanonicalSide) {
    if (side < 8) throw PreconditionError("canonical side must be >= 8, got " + std::to_string(side));
    return resize_bilinear(img, side, side);
}

}  // namespace edittrack
