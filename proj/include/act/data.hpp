#pragma once

#include <cstddef>
#include <vector>

namespace act {

// Labeled point cloud; labels are class ids in [0, num_classes).
struct LabeledSet {
  std::vector<std::vector<double>> points;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return points.size(); }
  std::size_t dim() const { return points.empty() ? 0 : points[0].size(); }
  void validate() const;  // sizes agree, labels in range; throws DataError

  std::vector<std::size_t> class_counts() const;
  std::vector<double> class_priors() const;
};

}  // namespace act
