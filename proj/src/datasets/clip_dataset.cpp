#include <sstream>

#include "drnet/datasets.hpp"
#include "seeding.hpp"

namespace drnet {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return detail::mix_seed(seed, stream); }

ClipDataset::ClipDataset(ClipShape shape, std::uint32_t num_classes, PixelType dtype)
    : shape_(shape), num_classes_(num_classes), dtype_(dtype) {
    if (shape.frames < 2) throw ConfigError("a clip needs at least 2 frames");
    if (shape.channels == 0 || shape.height == 0 || shape.width == 0)
        throw ConfigError("frame dimensions must be positive");
    if (num_classes == 0) throw ConfigError("num_classes must be positive");
}

std::span<const float> ClipDataset::frame(std::size_t clip, std::size_t t) const {
    const auto& c = clips_.at(clip);
    if (t >= shape_.frames) throw std::out_of_range("frame index out of range");
    return std::span<const float>(c.pixels).subspan(t * shape_.frame_size(), shape_.frame_size());
}

void ClipDataset::add_clip(VideoClip clip) {
    if (clip.pixels.size() != shape_.clip_size()) {
        std::ostringstream msg;
        msg << "clip has " << clip.pixels.size() << " values, expected " << shape_.clip_size();
        throw ConfigError(msg.str());
    }
    if (clip.content_label >= num_classes_)
        throw ConfigError("content_label " + std::to_string(clip.content_label) + " outside [0, " +
                          std::to_string(num_classes_) + ")");
    for (float v : clip.pixels)
        if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("pixel value outside [0,1]");
    clips_.push_back(std::move(clip));
}

ClipDataset subset(const ClipDataset& dataset, std::span<const std::size_t> clip_indices) {
    ClipDataset out(dataset.shape(), dataset.num_classes(), dataset.pixel_type());
    out.metadata = dataset.metadata;
    std::uint32_t id = 0;
    for (std::size_t i : clip_indices) {
        VideoClip c = dataset.clip(i);
        c.clip_id = id++;
        out.add_clip(std::move(c));
    }
    return out;
}

} // namespace drnet
