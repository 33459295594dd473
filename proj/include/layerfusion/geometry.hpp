#pragma once

#include <span>
#include <string>

namespace layerfusion {

// Axis-aligned box in normalized image coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  bool operator==(const Box&) const = default;
};

bool is_valid(const Box& b);
// Throws InvalidBox naming the offending coordinates.
void validate(const Box& b);
std::string to_string(const Box& b);

double iou(const Box& a, const Box& b);

// Fraction of pairs whose IoU is strictly greater than 0.5. An empty input
// yields 0.0 and a warning on stderr.
double iou05_accuracy(std::span<const Box> predicted, std::span<const Box> ground_truth);

}  // namespace layerfusion
