#include "drnet/datasets.hpp"

namespace drnet {

FramePairSample sample_frame_pair(const ClipDataset& dataset, std::size_t max_offset, Rng& rng) {
    if (dataset.empty()) throw SamplingError("cannot sample from an empty dataset");
    const std::size_t frames = dataset.shape().frames;
    if (max_offset >= frames)
        throw ConfigError("max offset K=" + std::to_string(max_offset) + " must be < T=" + std::to_string(frames));

    FramePairSample s;
    s.clip = std::uniform_int_distribution<std::size_t>(0, dataset.size() - 1)(rng);
    s.offset_k = std::uniform_int_distribution<std::size_t>(0, max_offset)(rng);
    s.t = std::uniform_int_distribution<std::size_t>(0, frames - 1 - s.offset_k)(rng);
    s.x_t = dataset.frame(s.clip, s.t);
    s.x_tk = dataset.frame(s.clip, s.t + s.offset_k);
    return s;
}

PosePairFrames sample_pose_pair_frames(const ClipDataset& dataset, std::size_t max_offset, Rng& rng) {
    if (dataset.size() < 2) throw SamplingError("different-clip pose pairs need at least 2 clips");
    PosePairFrames out;
    out.same = sample_frame_pair(dataset, max_offset, rng);
    std::size_t j = std::uniform_int_distribution<std::size_t>(0, dataset.size() - 2)(rng);
    if (j >= out.same.clip) ++j;
    out.cross_clip = j;
    out.cross_frame = dataset.frame(j, out.same.t + out.same.offset_k);
    return out;
}

} // namespace drnet
