#pragma once

#include <cstddef>
#include <vector>

namespace stim {

// Raw RGB clip of zero-centred intensities, laid out [T][H][W][3].
struct Video {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    Video() = default;
    Video(int t, int h, int w)
        : frames(t), height(h), width(w), pixels(static_cast<std::size_t>(t) * h * w * 3, 0.0) {}

    std::size_t offset(int t, int y, int x, int c) const {
        return ((static_cast<std::size_t>(t) * height + y) * width + x) * 3 + c;
    }
    double& at(int t, int y, int x, int c) { return pixels[offset(t, y, x, c)]; }
    double at(int t, int y, int x, int c) const { return pixels[offset(t, y, x, c)]; }
};

}  // namespace stim
