#include "polyview/method.hpp"

#include <stdexcept>
#include <string>

namespace polyview {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::InfoNCE:
      return "infonce";
    case Method::MultiCrop:
      return "multicrop";
    case Method::ArithmeticPVC:
      return "arithmetic";
    case Method::GeometricPVC:
      return "geometric";
    case Method::SuffStats:
      return "suffstats";
  }
  throw std::invalid_argument("unknown method");
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "' (expected infonce|multicrop|arithmetic|geometric|suffstats)");
}

}  // namespace polyview
