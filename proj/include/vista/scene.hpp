#pragma once

#include <array>
#include <string>
#include <vector>

#include "vista/types.hpp"

namespace vista {

// Procedural scene: up to four shapes on a 4x4 cell grid over a solid
// background. Renders deterministically (no anti-aliasing) so images are
// reproducible from the manifest serialization alone.

inline constexpr int kGridCells = 4;

enum class ShapeKind { Circle, Square, Triangle };

struct Palette {
    static constexpr int kSize = 8;
    static const std::array<const char*, kSize>& names();
    static const std::array<std::array<float, 3>, kSize>& rgb();
    static int index_of(const std::string& name);  // -1 if unknown
};

struct SceneObject {
    ShapeKind shape = ShapeKind::Circle;
    int color = 0;  // palette index
    int row = 0, col = 0;
    bool large = true;

    bool operator==(const SceneObject&) const = default;
};

struct SceneSpec {
    int background = 1;  // palette index; default white
    std::vector<SceneObject> objects;

    bool operator==(const SceneSpec&) const = default;

    void validate() const;  // <=4 objects, unique cells

    // Canonical string, e.g. "bg=white;circle,red,0,1,large;square,blue,2,3,small"
    std::string serialize() const;
    static SceneSpec parse(const std::string& s);
};

const char* shape_name(ShapeKind s);
ShapeKind shape_from_name(const std::string& s);

// Deterministic raster at the requested resolution.
ImageGrid render(const SceneSpec& scene, int image_size, int channels);

// Templated natural-language description of the scene.
std::string caption(const SceneSpec& scene);

// Position words used by captions/instructions ("top left" etc).
std::string position_phrase(int row, int col);

}  // namespace vista
