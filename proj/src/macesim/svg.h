/* Copyright 2026 The macesim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace macesim::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // drawn in x order
};

// Grouped bars: values[s][c] is series s in category c.
struct BarData {
  std::vector<std::string> categories;
  std::vector<std::string> series;
  std::vector<std::vector<double>> values;
};

std::string escape(std::string_view text);

// Standalone SVG documents. Axes span the data range (y from 0 when all
// values are non-negative).
std::string line_chart(std::string_view title, std::string_view x_label,
                       std::string_view y_label, std::span<const Series> series);
std::string bar_chart(std::string_view title, std::string_view y_label, const BarData& data);

}  // namespace macesim::svg
