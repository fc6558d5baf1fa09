#include <algorithm>
#include <fstream>

#include "drnet/datasets.hpp"

namespace drnet {

namespace {

// 5x7 bitmap font, one string per row, '#' = ink.
constexpr const char* kFont[10][7] = {
    {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},
    {"  #  ", " ##  ", "# #  ", "  #  ", "  #  ", "  #  ", "#####"},
    {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"},
    {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "},
    {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},
    {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},
    {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "},
    {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "},
    {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},
    {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "},
};

constexpr int kCell = 3;                              // font pixel -> 3x3 glyph pixels
constexpr int kOffsetX = (kGlyphSize - 5 * kCell) / 2; // centres the 15x21 bitmap
constexpr int kOffsetY = (kGlyphSize - 7 * kCell) / 2;

Glyph rasterize(int digit) {
    std::array<int, kGlyphSize * kGlyphSize> ink{};
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c)
            if (kFont[digit][r][c] == '#')
                for (int dy = 0; dy < kCell; ++dy)
                    for (int dx = 0; dx < kCell; ++dx)
                        ink[(kOffsetY + r * kCell + dy) * kGlyphSize + kOffsetX + c * kCell + dx] = 255;

    // 3x3 box blur gives MNIST-like soft edges.
    Glyph g;
    for (int y = 0; y < kGlyphSize; ++y)
        for (int x = 0; x < kGlyphSize; ++x) {
            int sum = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < kGlyphSize && xx >= 0 && xx < kGlyphSize)
                        sum += ink[yy * kGlyphSize + xx];
                }
            const int centre = ink[y * kGlyphSize + x];
            g.pixels[y * kGlyphSize + x] = std::uint8_t(std::max(centre, sum / 9));
        }
    return g;
}

std::uint32_t read_be32(std::istream& in, const char* field) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("MNIST file truncated at ") + field);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

} // namespace

GlyphBank GlyphBank::builtin() {
    GlyphBank bank;
    for (int d = 0; d < 10; ++d) bank.glyphs_[d].push_back(rasterize(d));
    bank.source_ = "builtin";
    return bank;
}

GlyphBank GlyphBank::load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels) {
    std::ifstream img(images, std::ios::binary), lab(labels, std::ios::binary);
    if (!img) throw FormatError("cannot open MNIST images: " + images.string());
    if (!lab) throw FormatError("cannot open MNIST labels: " + labels.string());

    if (read_be32(img, "image magic") != 0x00000803) throw FormatError("bad magic in MNIST image file");
    if (read_be32(lab, "label magic") != 0x00000801) throw FormatError("bad magic in MNIST label file");
    const std::uint32_t n = read_be32(img, "image count");
    const std::uint32_t rows = read_be32(img, "rows");
    const std::uint32_t cols = read_be32(img, "cols");
    if (read_be32(lab, "label count") != n) throw FormatError("MNIST image/label counts differ");
    if (rows != kGlyphSize || cols != kGlyphSize) throw FormatError("MNIST images must be 28x28");

    GlyphBank bank;
    for (std::uint32_t i = 0; i < n; ++i) {
        Glyph g;
        if (!img.read(reinterpret_cast<char*>(g.pixels.data()), g.pixels.size()))
            throw FormatError("MNIST image payload truncated");
        char label = 0;
        if (!lab.read(&label, 1)) throw FormatError("MNIST label payload truncated");
        if (label < 0 || label > 9) throw FormatError("MNIST label out of range");
        bank.glyphs_[label].push_back(g);
    }
    for (int d = 0; d < 10; ++d)
        if (bank.glyphs_[d].empty()) throw FormatError("MNIST file has no glyph for digit " + std::to_string(d));
    bank.source_ = "mnist:" + images.filename().string();
    return bank;
}

} // namespace drnet
