#pragma once

#include <cstdint>

#include "mtl/idx.hpp"

namespace mtl {

/// Procedurally drawn digit-like glyphs: 10 classes, 28x28, MNIST-style
/// framing (ink inside a central 20x20 box on a black background).
/// Each sample applies a random rotation, scale, shear, offset, and stroke
/// width, so the set is deterministic in (count, seed) only.
LabeledImages make_glyph_set(std::size_t count, std::uint64_t seed);

}  // namespace mtl
