#include "dlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace dlab {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), key_(mix64(seed + kGolden)) {}

RngStream RngStream::split(std::uint64_t index) const {
  RngStream child(seed_);
  child.path_ = path_;
  child.path_.push_back(index);
  child.key_ = mix64(key_ ^ mix64(index * kGolden + 0x632BE59BD9B4E019ULL));
  return child;
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(mix64(counter_ * kGolden ^ key_) + key_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  // Lemire's multiply-shift; bias is below 2^-64 * n, irrelevant here.
  const unsigned __int128 product =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::uint64_t>(product >> 64);
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace dlab
