#include "stim/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "stim/error.hpp"

namespace stim {

namespace {

// Object texture: a random two-colour pattern of 4-pixel cells that moves with it.
constexpr double kObjectColors[2][3] = {{2.0, -1.5, -1.5}, {-1.5, -1.5, 2.0}};
constexpr int kObjectCell = 4;

// Portable uniform [0, 1) from a 64-bit engine.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::pair<int, int> object_corner(const SyntheticVideoSpec& spec, int t) {
    double dx = spec.velocity_x * t;
    double dy = spec.velocity_y * t;
    if (spec.trajectory == Trajectory::sinusoidal) {
        const double w = 2.0 * std::numbers::pi / spec.period;
        dx = spec.velocity_x / w * std::sin(w * t);
        dy = spec.velocity_y / w * std::sin(w * t);
    }
    return {spec.start_x + static_cast<int>(std::lround(dx)), spec.start_y + static_cast<int>(std::lround(dy))};
}

}  // namespace

Trajectory trajectory_from_string(const std::string& name) {
    if (name == "linear") return Trajectory::linear;
    if (name == "sinusoidal") return Trajectory::sinusoidal;
    throw ConfigError("unknown trajectory '" + name + "'");
}

std::string to_string(Trajectory t) { return t == Trajectory::linear ? "linear" : "sinusoidal"; }

SyntheticVideo synth_generate(const SyntheticVideoSpec& spec, std::uint64_t seed) {
    if (spec.frames <= 0 || spec.height <= 0 || spec.width <= 0 || spec.patch_size <= 0) {
        throw ConfigError("synthetic video dims must be positive");
    }
    if (spec.height % spec.patch_size != 0 || spec.width % spec.patch_size != 0) {
        throw ConfigError("synthetic video dims must be multiples of patch_size");
    }
    if (spec.object_size <= 0 || spec.period <= 0 || spec.noise < 0.0) {
        throw ConfigError("object_size and period must be positive, noise non-negative");
    }

    SyntheticVideo out;
    for (int t = 0; t < spec.frames; ++t) {
        const auto [x, y] = object_corner(spec, t);
        if (x < 0 || y < 0 || x + spec.object_size > spec.width || y + spec.object_size > spec.height) {
            throw Error("object exits frame at t=" + std::to_string(t));
        }
        out.object_path.emplace_back(x, y);
    }

    // Intensities are zero-centred. Background: a few random plane waves per channel in [-0.8, 0.8].
    std::mt19937_64 tex(spec.texture_seed);
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves[3];
    for (auto& ch : waves) {
        for (int k = 0; k < 4; ++k) {
            ch.push_back(Wave{unit(tex) * 0.25, unit(tex) * 0.25, unit(tex) * 2.0 * std::numbers::pi, 0.5 + unit(tex)});
        }
    }
    std::vector<double> background(static_cast<std::size_t>(spec.height) * spec.width * 3);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = 0.0;
                double norm = 0.0;
                for (const Wave& w : waves[c]) {
                    v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
                    norm += w.amp;
                }
                background[(static_cast<std::size_t>(y) * spec.width + x) * 3 + c] = 0.8 * v / norm;
            }
        }
    }

    const int cells = (spec.object_size + kObjectCell - 1) / kObjectCell;
    std::vector<int> pattern(static_cast<std::size_t>(cells) * cells);
    for (int& v : pattern) v = unit(tex) < 0.5 ? 0 : 1;

    Video clean(spec.frames, spec.height, spec.width);
    for (int t = 0; t < spec.frames; ++t) {
        const auto [ox, oy] = out.object_path[static_cast<std::size_t>(t)];
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const bool inside = x >= ox && x < ox + spec.object_size && y >= oy && y < oy + spec.object_size;
                const int parity =
                    inside ? pattern[static_cast<std::size_t>((y - oy) / kObjectCell) * cells + (x - ox) / kObjectCell] : 0;
                for (int c = 0; c < 3; ++c) {
                    clean.at(t, y, x, c) = inside ? kObjectColors[parity][c]
                                                  : background[(static_cast<std::size_t>(y) * spec.width + x) * 3 + c];
                }
            }
        }
    }

    const int gw = spec.width / spec.patch_size;
    const int n_s = gw * (spec.height / spec.patch_size);
    for (int t = 0; t + 1 < spec.frames; ++t) {
        std::vector<char> changed(static_cast<std::size_t>(n_s), 0);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    if (clean.at(t, y, x, c) != clean.at(t + 1, y, x, c)) {
                        changed[static_cast<std::size_t>((y / spec.patch_size) * gw + x / spec.patch_size)] = 1;
                    }
                }
            }
        }
        out.step_mask.push_back(std::move(changed));
    }
    out.dynamic_mask.assign(static_cast<std::size_t>(spec.frames), std::vector<char>(static_cast<std::size_t>(n_s), 0));
    for (int t = 0; t < spec.frames; ++t) {
        for (int p = 0; p < n_s; ++p) {
            const bool before = t > 0 && out.step_mask[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p)];
            const bool after = t + 1 < spec.frames && out.step_mask[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
            out.dynamic_mask[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] = before || after;
        }
    }

    out.video = std::move(clean);
    if (spec.noise > 0.0) {
        std::mt19937_64 rng(seed);
        for (double& v : out.video.pixels) v += (2.0 * unit(rng) - 1.0) * spec.noise;
    }
    return out;
}

}  // namespace stim
