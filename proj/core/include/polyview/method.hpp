#pragma once

#include <array>
#include <string>
#include <string_view>

namespace polyview {

enum class Method { InfoNCE, MultiCrop, ArithmeticPVC, GeometricPVC, SuffStats };

inline constexpr std::array<Method, 5> kAllMethods = {
    Method::InfoNCE, Method::MultiCrop, Method::ArithmeticPVC, Method::GeometricPVC,
    Method::SuffStats};

// CLI / CSV spelling: infonce, multicrop, arithmetic, geometric, suffstats.
std::string_view to_string(Method method);
Method parse_method(std::string_view name);

// True for the objectives whose bound offset is log(B - M + 1).
inline bool uses_polyview_offset(Method method) {
  return method == Method::ArithmeticPVC || method == Method::GeometricPVC ||
         method == Method::SuffStats;
}

}  // namespace polyview
