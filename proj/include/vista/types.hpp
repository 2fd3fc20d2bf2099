#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vista/errors.hpp"

namespace vista {

// Token id sequence produced by the tokenizer. `truncated` records that
// the raw text exceeded the model's text budget.
struct TokenSequence {
    std::vector<int> ids;
    bool truncated = false;
};

// Raster image, values in [0,1], row-major (y, x, channel).
struct ImageGrid {
    int size = 0;
    int channels = 0;
    std::vector<float> pixels;

    ImageGrid() = default;
    ImageGrid(int sz, int ch)
        : size(sz), channels(ch),
          pixels(static_cast<size_t>(sz) * sz * ch, 0.0f) {}

    float& at(int y, int x, int c) {
        return pixels[(static_cast<size_t>(y) * size + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return pixels[(static_cast<size_t>(y) * size + x) * channels + c];
    }
};

enum class TokenOrder { VisualFirst, TextFirst };

inline const char* to_string(TokenOrder o) {
    return o == TokenOrder::VisualFirst ? "visual_first" : "text_first";
}

inline TokenOrder token_order_from_string(const std::string& s) {
    if (s == "visual_first") return TokenOrder::VisualFirst;
    if (s == "text_first") return TokenOrder::TextFirst;
    throw ConfigError("unknown token_order: " + s);
}

}  // namespace vista
