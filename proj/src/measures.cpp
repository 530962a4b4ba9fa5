#include "symcon/measures.hpp"

namespace symcon {

std::string to_string(Norm n) {
  switch (n) {
    case Norm::One: return "1";
    case Norm::Two: return "2";
    case Norm::Infinity: return "inf";
  }
  return "?";
}

Norm norm_from_string(const std::string& s) {
  if (s == "1" || s == "one") return Norm::One;
  if (s == "2" || s == "two") return Norm::Two;
  if (s == "inf" || s == "infinity") return Norm::Infinity;
  throw Error("unknown norm '" + s + "' (expected 1, 2 or inf)");
}

}  // namespace symcon
