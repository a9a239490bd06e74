#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "edittrack/image.hpp"
#include "edittrack/image_io.hpp"

namespace edittrack::testing {

inline std::filesystem::path data_dir() { return EDITTRACK_TEST_DATA; }
inline std::filesystem::path fixture(const std::string& name) { return data_dir() / "fixtures" / (name + ".png"); }

inline ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
    ImageBuffer img(w, h);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng() & 0xff);
    return img;
}

// Smooth random image: a few colored blobs over a gradient.
inline ImageBuffer blob_image(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageBuffer img(w, h);
    const double g0 = 255 * u(rng), g1 = 255 * u(rng);
    struct Blob { double x, y, r; int c[3]; };
    std::vector<Blob> blobs;
    for (int i = 0; i < 4; ++i)
        blobs.push_back({u(rng) * w, u(rng) * h, (0.1 + 0.3 * u(rng)) * w,
                         {int(255 * u(rng)), int(255 * u(rng)), int(255 * u(rng))}});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = static_cast<double>(y) / h;
            int c[3] = {int(g0 * (1 - t) + g1 * t), int(g1 * (1 - t) + g0 * t), int(128 * t)};
            for (const auto& b : blobs)
                if ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y) < b.r * b.r)
                    for (int k = 0; k < 3; ++k) c[k] = b.c[k];
            img.set(x, y, c[0], c[1], c[2]);
        }
    return img;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("edittrack-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace edittrack::testing
