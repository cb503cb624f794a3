#pragma once

#include <cstdint>
#include <filesystem>

#include "core/imaging.hpp"

namespace ldst {

// Procedural stand-ins for photo and artwork corpora.
// Content: sky/ground scene with shaded solids, clear edges and depth cues.
Image synth_content(int height, int width, std::uint64_t seed);
// Style: layered strokes, colour cells and stripes from a random palette.
Image synth_style(int height, int width, std::uint64_t seed);

enum class SynthKind { content, style };

// Writes count PNGs named <prefix>_0000.png ... into dir.
void write_synth_set(const std::filesystem::path& dir, SynthKind kind, int count, int height,
                     int width, std::uint64_t seed);

}  // namespace ldst
