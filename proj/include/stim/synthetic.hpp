#pragma once

// Synthetic clips: a smooth textured background with one solid moving square,
// plus the ground-truth mask of patches whose content changes.

#include <cstdint>
#include <string>
#include <vector>

#include "stim/video.hpp"

namespace stim {

enum class Trajectory { linear, sinusoidal };

struct SyntheticVideoSpec {
    int frames = 16;
    int height = 224;
    int width = 224;
    int patch_size = 16;  // granularity of the ground-truth mask
    std::uint64_t texture_seed = 1;
    int object_size = 32;
    int start_x = 96;
    int start_y = 96;
    double velocity_x = 4.0;  // pixels per frame (peak speed for sinusoidal)
    double velocity_y = 0.0;
    Trajectory trajectory = Trajectory::linear;
    int period = 16;       // frames per oscillation, sinusoidal only
    double noise = 0.0;    // uniform per-pixel noise amplitude
};

struct SyntheticVideo {
    Video video;
    // step_mask[t][p]: patch p differs between clean frames t and t + 1.
    std::vector<std::vector<char>> step_mask;
    // dynamic_mask[t][p]: patch p changes entering or leaving frame t.
    std::vector<std::vector<char>> dynamic_mask;
    // Top-left object corner per frame.
    std::vector<std::pair<int, int>> object_path;
};

Trajectory trajectory_from_string(const std::string& name);
std::string to_string(Trajectory t);

// Deterministic in (spec, seed); `seed` drives the noise.
SyntheticVideo synth_generate(const SyntheticVideoSpec& spec, std::uint64_t seed);

}  // namespace stim
