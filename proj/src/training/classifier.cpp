#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "drnet/training.hpp"

namespace drnet {

DataSplit split_by_group(std::size_t rows, const std::vector<std::int64_t>& groups, double val_fraction,
                         double test_fraction, Rng& rng) {
    if (!groups.empty() && groups.size() != rows) throw ConfigError("groups and rows are not aligned");
    std::vector<std::int64_t> group_of(rows);
    if (groups.empty())
        std::iota(group_of.begin(), group_of.end(), 0);
    else
        group_of = groups;
    const std::set<std::int64_t> unique(group_of.begin(), group_of.end());
    std::vector<std::int64_t> ids(unique.begin(), unique.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = ids.size();
    const auto n_test = std::size_t(std::llround(test_fraction * double(n)));
    const auto n_val = std::size_t(std::llround(val_fraction * double(n)));
    if (n_test + n_val >= n) throw ConfigError("too few rows/groups for the requested validation and test split");

    std::map<std::int64_t, int> where;
    for (std::size_t i = 0; i < n; ++i) where[ids[i]] = i < n_test ? 2 : (i < n_test + n_val ? 1 : 0);
    DataSplit s;
    for (std::size_t r = 0; r < rows; ++r) {
        switch (where[group_of[r]]) {
        case 0: s.train.push_back(std::int64_t(r)); break;
        case 1: s.val.push_back(std::int64_t(r)); break;
        default: s.test.push_back(std::int64_t(r)); break;
        }
    }
    return s;
}

namespace {

std::string snapshot(const ClassifierHead& head) {
    torch::serialize::OutputArchive a;
    head->save(a);
    std::ostringstream os;
    a.save_to(os);
    return os.str();
}

void restore(ClassifierHead& head, const std::string& blob) {
    std::istringstream is(blob);
    torch::serialize::InputArchive a;
    a.load_from(is);
    head->load(a);
}

double accuracy_on(ClassifierHead& head, const torch::Tensor& features, const torch::Tensor& labels,
                   const std::vector<std::int64_t>& rows) {
    if (rows.empty()) return 0.0;
    const auto idx = torch::tensor(rows);
    head->eval();
    torch::NoGradGuard no_grad;
    const auto pred = head->forward(features.index_select(0, idx)).argmax(1);
    return (pred == labels.index_select(0, idx)).sum().item<double>() / double(rows.size());
}

} // namespace

double classification_accuracy(ClassifierHead& head, const torch::Tensor& features,
                               const std::vector<std::int64_t>& labels) {
    if (features.size(0) != std::int64_t(labels.size())) throw ConfigError("features and labels are not aligned");
    std::vector<std::int64_t> rows(labels.size());
    std::iota(rows.begin(), rows.end(), 0);
    return accuracy_on(head, features.to(torch::kFloat32), torch::tensor(labels), rows);
}

ClassifierResult train_classifier_head(const torch::Tensor& features, const std::vector<std::int64_t>& labels,
                                       const ClassifierConfig& config, const std::vector<std::int64_t>& groups) {
    if (features.dim() != 2) throw ConfigError("features must be a [rows, dim] matrix");
    if (features.size(0) != std::int64_t(labels.size())) throw ConfigError("features and labels are not aligned");
    if (!groups.empty() && groups.size() != labels.size()) throw ConfigError("groups and labels are not aligned");
    if (std::set<std::int64_t>(labels.begin(), labels.end()).size() < 2)
        throw ConfigError("classifier training needs at least 2 classes");
    if (*std::min_element(labels.begin(), labels.end()) < 0) throw ConfigError("labels must be non-negative");
    if (config.max_epochs < 1 || config.patience < 1 || config.batch_size < 2)
        throw ConfigError("classifier needs max_epochs >= 1, patience >= 1, batch_size >= 2");
    if (!(config.val_fraction > 0.0) || !(config.test_fraction >= 0.0) ||
        config.val_fraction + config.test_fraction >= 1.0)
        throw ConfigError("validation/test fractions must be positive and sum below 1");

    torch::manual_seed(config.seed);
    Rng rng(derive_seed(config.seed, 8));
    const auto split = split_by_group(labels.size(), groups, config.val_fraction, config.test_fraction, rng);
    if (split.train.size() < 2) throw ConfigError("too few training rows");

    const auto x = features.to(torch::kFloat32).contiguous();
    const auto y = torch::tensor(labels);
    const auto num_classes = *std::max_element(labels.begin(), labels.end()) + 1;

    ClassifierResult result;
    result.head = build_classifier(x.size(1), config.hidden, num_classes, derive_seed(config.seed, 9), config.dropout);
    torch::optim::Adam opt(result.head->parameters(), torch::optim::AdamOptions(config.learning_rate));

    std::string best = snapshot(result.head);
    double best_val = -1.0;
    std::int64_t since_best = 0;
    auto order = split.train;
    for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        result.head->train();
        for (std::size_t i = 0; i < order.size(); i += std::size_t(config.batch_size)) {
            auto end = std::min(order.size(), i + std::size_t(config.batch_size));
            if (end - i < 2) continue; // batch norm needs two rows
            const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + std::ptrdiff_t(i),
                                                                     order.begin() + std::ptrdiff_t(end)));
            opt.zero_grad();
            const auto loss = torch::cross_entropy_loss(result.head->forward(x.index_select(0, idx)), y.index_select(0, idx));
            loss.backward();
            opt.step();
        }
        result.epochs = epoch;
        const double val = accuracy_on(result.head, x, y, split.val);
        if (val > best_val) {
            best_val = val;
            best = snapshot(result.head);
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    restore(result.head, best);
    result.head->eval();
    result.val_accuracy = best_val;
    result.test_accuracy = split.test.empty() ? best_val : accuracy_on(result.head, x, y, split.test);
    return result;
}

} // namespace drnet
