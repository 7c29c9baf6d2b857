#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace quadrl {

inline constexpr int kImageSide = 32;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

/// 32x32 row-major grid of distances in meters; row 0 is the top of the view.
struct DepthImage {
  std::array<float, kImagePixels> depths{};

  float& at(int row, int col) { return depths[static_cast<std::size_t>(row) * kImageSide + col]; }
  float at(int row, int col) const {
    return depths[static_cast<std::size_t>(row) * kImageSide + col];
  }
  bool operator==(const DepthImage&) const = default;
};

/// (I_t, I_{t-1}, v_t).
struct StackedState {
  DepthImage image_now;
  DepthImage image_prev;
  std::array<float, 3> velocity{};

  bool operator==(const StackedState&) const = default;

  bool finite() const {
    for (float v : velocity) {
      if (!std::isfinite(v)) return false;
    }
    for (const DepthImage* img : {&image_now, &image_prev}) {
      for (float d : img->depths) {
        if (!std::isfinite(d)) return false;
      }
    }
    return true;
  }
};

enum class Action : std::uint8_t { Left = 0, Right = 1 };

inline constexpr std::size_t kNumActions = 2;

inline constexpr double kCollisionReward = -100.0;
inline constexpr double kSurvivalReward = 3.0;

/// (s, a, s', r, done) transition.
struct Experience {
  StackedState s;
  Action a = Action::Left;
  StackedState s_next;
  float r = 0.0f;
  bool done = false;

  bool operator==(const Experience&) const = default;
};

}  // namespace quadrl
