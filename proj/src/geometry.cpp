#include "layerfusion/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "layerfusion/errors.hpp"

namespace layerfusion {

bool is_valid(const Box& b) {
  const bool finite = std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2);
  return finite && b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= 1.0 && b.y2 <= 1.0 && b.x1 < b.x2 && b.y1 < b.y2;
}

std::string to_string(const Box& b) {
  return "(" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " + std::to_string(b.x2) + ", " +
         std::to_string(b.y2) + ")";
}

void validate(const Box& b) {
  if (!is_valid(b)) throw InvalidBox("invalid box " + to_string(b));
}

double iou(const Box& a, const Box& b) {
  validate(a);
  validate(b);
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou05_accuracy(std::span<const Box> predicted, std::span<const Box> ground_truth) {
  if (predicted.size() != ground_truth.size())
    throw InvalidArgument("iou05_accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                          std::to_string(ground_truth.size()) + " ground-truth boxes");
  if (predicted.empty()) {
    std::cerr << "warning: iou05_accuracy over an empty set is reported as 0\n";
    return 0.0;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (iou(predicted[i], ground_truth[i]) > 0.5) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace layerfusion
