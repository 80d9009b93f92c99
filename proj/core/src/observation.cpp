#include "vnav/observation.hpp"

#include <cmath>
#include <cstring>

namespace vnav {

void normalize(Descriptor& d) {
  double n2 = 0.0;
  for (float v : d) n2 += double(v) * v;
  if (n2 <= 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (float& v : d) v = static_cast<float>(v * inv);
}

double dot(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += double(a[i]) * b[i];
  return s;
}

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(T v) {
    bytes(&v, sizeof(v));
  }
};

}  // namespace

std::uint64_t digest(const FrameObservation& obs) {
  Fnv f;
  f.value<std::uint64_t>(obs.detections.size());
  for (const auto& d : obs.detections) {
    f.value(d.pixel.u);
    f.value(d.pixel.v);
    f.value(d.depth);
    f.value<std::uint8_t>(d.is_ground ? 1 : 0);
    f.value(d.landmark_id);
    f.bytes(d.descriptor.data(), d.descriptor.size() * sizeof(float));
  }
  return f.h;
}

}  // namespace vnav
