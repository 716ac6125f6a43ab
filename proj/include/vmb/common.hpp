#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmb {

// Error taxonomy mirrored by the C API status codes.
enum class Errc : int {
  ok = 0,
  invalid_config = 2,
  grid_mismatch = 10,
  bad_argument = 11,
  numerical_abort = 3,   // NaN / CFL abort
  io_failure = 12,
  constraint_violation = 13,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// (2*pi)^{-3/2} exp(-|v|^2/2), the normalized global Maxwellian.
inline double maxwellian(double vx, double vy, double vz) {
  const double c = 0.06349363593424098; // (2*pi)^{-3/2}
  return c * std::exp(-0.5 * (vx * vx + vy * vy + vz * vz));
}

inline double sqrt_maxwellian(double vx, double vy, double vz) {
  const double c = 0.25197480430283461; // (2*pi)^{-3/4}
  return c * std::exp(-0.25 * (vx * vx + vy * vy + vz * vz));
}

// FNV-1a over an arbitrary byte string; used for operator-cache keys.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace vmb
