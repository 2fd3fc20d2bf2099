#include "vista/scene.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "vista/errors.hpp"

namespace vista {

const std::array<const char*, Palette::kSize>& Palette::names() {
    static const std::array<const char*, kSize> n = {
        "black", "white", "red", "green", "blue", "yellow", "purple", "cyan"};
    return n;
}

const std::array<std::array<float, 3>, Palette::kSize>& Palette::rgb() {
    static const std::array<std::array<float, 3>, kSize> c = {{
        {0.0f, 0.0f, 0.0f},
        {1.0f, 1.0f, 1.0f},
        {1.0f, 0.0f, 0.0f},
        {0.0f, 1.0f, 0.0f},
        {0.0f, 0.0f, 1.0f},
        {1.0f, 1.0f, 0.0f},
        {0.5f, 0.0f, 0.5f},
        {0.0f, 1.0f, 1.0f},
    }};
    return c;
}

int Palette::index_of(const std::string& name) {
    for (int i = 0; i < kSize; ++i)
        if (name == names()[static_cast<size_t>(i)]) return i;
    return -1;
}

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Square: return "square";
        case ShapeKind::Triangle: return "triangle";
    }
    return "?";
}

ShapeKind shape_from_name(const std::string& s) {
    if (s == "circle") return ShapeKind::Circle;
    if (s == "square") return ShapeKind::Square;
    if (s == "triangle") return ShapeKind::Triangle;
    throw InputError("unknown shape: " + s);
}

void SceneSpec::validate() const {
    if (background < 0 || background >= Palette::kSize)
        throw InputError("scene: background color out of palette");
    if (objects.size() > 4) throw InputError("scene: more than 4 objects");
    std::set<std::pair<int, int>> cells;
    for (const auto& o : objects) {
        if (o.color < 0 || o.color >= Palette::kSize)
            throw InputError("scene: object color out of palette");
        if (o.row < 0 || o.row >= kGridCells || o.col < 0 || o.col >= kGridCells)
            throw InputError("scene: object cell out of grid");
        if (!cells.insert({o.row, o.col}).second)
            throw InputError("scene: two objects share a cell");
    }
}

std::string SceneSpec::serialize() const {
    std::ostringstream out;
    out << "bg=" << Palette::names()[static_cast<size_t>(background)];
    for (const auto& o : objects)
        out << ";" << shape_name(o.shape) << "," << Palette::names()[static_cast<size_t>(o.color)]
            << "," << o.row << "," << o.col << "," << (o.large ? "large" : "small");
    return out.str();
}

SceneSpec SceneSpec::parse(const std::string& s) {
    SceneSpec spec;
    spec.objects.clear();
    std::stringstream ss(s);
    std::string seg;
    bool first = true;
    while (std::getline(ss, seg, ';')) {
        if (first) {
            if (seg.rfind("bg=", 0) != 0) throw InputError("scene parse: missing bg=: " + s);
            int c = Palette::index_of(seg.substr(3));
            if (c < 0) throw InputError("scene parse: unknown color: " + seg.substr(3));
            spec.background = c;
            first = false;
            continue;
        }
        std::stringstream os(seg);
        std::string shape, color, row, col, size;
        if (!std::getline(os, shape, ',') || !std::getline(os, color, ',') ||
            !std::getline(os, row, ',') || !std::getline(os, col, ',') ||
            !std::getline(os, size, ','))
            throw InputError("scene parse: malformed object: " + seg);
        SceneObject o;
        o.shape = shape_from_name(shape);
        o.color = Palette::index_of(color);
        if (o.color < 0) throw InputError("scene parse: unknown color: " + color);
        o.row = std::stoi(row);
        o.col = std::stoi(col);
        if (size == "large")
            o.large = true;
        else if (size == "small")
            o.large = false;
        else
            throw InputError("scene parse: unknown size: " + size);
        spec.objects.push_back(o);
    }
    if (first) throw InputError("scene parse: empty spec");
    spec.validate();
    return spec;
}

namespace {

bool inside_shape(ShapeKind shape, double fx, double fy) {
    // fx, fy in [0,1] within the object's bounding box
    switch (shape) {
        case ShapeKind::Square:
            return true;
        case ShapeKind::Circle: {
            double dx = fx - 0.5, dy = fy - 0.5;
            return dx * dx + dy * dy <= 0.25;
        }
        case ShapeKind::Triangle:
            // upward triangle: apex at top center, base at the bottom
            return std::abs(fx - 0.5) <= 0.5 * fy;
    }
    return false;
}

}  // namespace

ImageGrid render(const SceneSpec& scene, int image_size, int channels) {
    scene.validate();
    if (image_size % kGridCells != 0)
        throw InputError("render: image_size must be divisible by the cell grid");
    ImageGrid img(image_size, channels);
    const auto& rgb = Palette::rgb();
    const auto& bg = rgb[static_cast<size_t>(scene.background)];
    for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(y, x, c) = bg[static_cast<size_t>(c % 3)];

    const int cell = image_size / kGridCells;
    for (const auto& o : scene.objects) {
        const int margin = o.large ? 0 : cell / 4;
        const int x0 = o.col * cell + margin;
        const int y0 = o.row * cell + margin;
        const int ext = cell - 2 * margin;
        const auto& col = rgb[static_cast<size_t>(o.color)];
        for (int y = 0; y < ext; ++y)
            for (int x = 0; x < ext; ++x) {
                const double fx = (x + 0.5) / ext;
                const double fy = (y + 0.5) / ext;
                if (!inside_shape(o.shape, fx, fy)) continue;
                for (int c = 0; c < channels; ++c)
                    img.at(y0 + y, x0 + x, c) = col[static_cast<size_t>(c % 3)];
            }
    }
    return img;
}

std::string position_phrase(int row, int col) {
    static const char* rows[kGridCells] = {"top", "upper", "lower", "bottom"};
    static const char* cols[kGridCells] = {"left", "midleft", "midright", "right"};
    return std::string(rows[row]) + " " + cols[col];
}

std::string caption(const SceneSpec& scene) {
    std::ostringstream out;
    if (scene.objects.empty()) {
        out << "an empty scene";
    } else {
        for (size_t i = 0; i < scene.objects.size(); ++i) {
            const auto& o = scene.objects[i];
            if (i > 0) out << " and ";
            out << "a " << (o.large ? "large" : "small") << " "
                << Palette::names()[static_cast<size_t>(o.color)] << " " << shape_name(o.shape)
                << " in the " << position_phrase(o.row, o.col);
        }
    }
    out << " on a " << Palette::names()[static_cast<size_t>(scene.background)] << " background";
    return out.str();
}

}  // namespace vista
