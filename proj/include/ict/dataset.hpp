#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ict {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DatasetProvenance {
    std::string task;
    std::uint64_t seed = 0;
    double exclude_top = 0.0;
};

/// Offline (design, score) pairs. Row i of `designs` is scored by `scores[i]`.
/// Discrete designs are stored as flattened one-hot blocks.
struct OfflineDataset {
    Matrix designs;
    Vector scores;
    DatasetProvenance provenance;

    int size() const { return static_cast<int>(designs.rows()); }
    int dim() const { return static_cast<int>(designs.cols()); }

    /// Rows selected by `indices`, in that order.
    OfflineDataset subset(const std::vector<int>& indices) const;
};

/// Header `x0,...,x{d-1},y`, one row per design, 17 significant digits.
void save_dataset_csv(const OfflineDataset& dataset, const std::string& path);

/// Throws std::runtime_error naming the offending row on malformed input.
OfflineDataset load_dataset_csv(const std::string& path);

}  // namespace ict
