#include <cstdio>
#include <sstream>

#include "drnet/training.hpp"

namespace drnet {

std::optional<MetricRecord> IntervalAverager::add(const MetricRecord& r) {
    sum_.loss_rec += r.loss_rec;
    sum_.loss_sim += r.loss_sim;
    sum_.loss_adv_ep += r.loss_adv_ep;
    sum_.loss_adv_c += r.loss_adv_c;
    sum_.disc_accuracy += r.disc_accuracy;
    sum_.step = r.step;
    if (++count_ < interval_) return std::nullopt;
    return flush();
}

std::optional<MetricRecord> IntervalAverager::flush() {
    if (count_ == 0) return std::nullopt;
    MetricRecord m = sum_;
    const double n = double(count_);
    m.loss_rec /= n;
    m.loss_sim /= n;
    m.loss_adv_ep /= n;
    m.loss_adv_c /= n;
    m.disc_accuracy /= n;
    sum_ = {};
    count_ = 0;
    return m;
}

std::string format_metric_row(const MetricRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.loss_rec,
                  r.loss_sim, r.loss_adv_ep, r.loss_adv_c, r.disc_accuracy);
    return buf;
}

MetricsCsvWriter::MetricsCsvWriter(const std::filesystem::path& path, bool append) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw FormatError("cannot write " + path.string());
    if (fresh) out_ << kMetricsHeader << "\n";
}

void MetricsCsvWriter::write(const MetricRecord& r) {
    out_ << format_metric_row(r) << "\n";
    out_.flush();
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("unexpected metrics header in " + path.string());
    std::vector<MetricRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricRecord r;
        long long step = 0;
        if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &step, &r.loss_rec, &r.loss_sim, &r.loss_adv_ep,
                        &r.loss_adv_c, &r.disc_accuracy) != 6)
            throw FormatError("malformed metrics row: " + line);
        r.step = step;
        out.push_back(r);
    }
    return out;
}

} // namespace drnet
