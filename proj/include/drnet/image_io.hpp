#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace drnet {

// 8-bit image, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

// [C, H, W] float tensor in [0,1] (C = 1 or 3) to 8-bit, rounding to nearest.
Image8 to_image8(const torch::Tensor& chw);
torch::Tensor from_image8(const Image8& image);

void write_png(const std::filesystem::path& path, const Image8& image);
void write_png(const std::filesystem::path& path, const torch::Tensor& chw);
Image8 read_png(const std::filesystem::path& path);

// Animated GIF, looping forever. Grayscale frames use a 256-level gray
// palette, colour frames a 6x6x6 colour cube.
void write_gif(const std::filesystem::path& path, const std::vector<torch::Tensor>& frames, int delay_centis = 10);

// Writes frame_%05d.png for every frame plus `gif_name` into `dir`.
void write_frame_dump(const std::filesystem::path& dir, const std::vector<torch::Tensor>& frames,
                      const std::string& gif_name = "rollout.gif");

} // namespace drnet
