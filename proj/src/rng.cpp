#include "biasbench/rng.hpp"

#include "biasbench/common.hpp"
#include "biasbench/text.hpp"

namespace biasbench {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::State: return "state";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Locked: return "locked";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "Rng::below(0)");
  if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::string_view tag) {
  return splitmix64(base ^ fnv1a64(tag));
}

std::uint64_t mix_seed(std::uint64_t base, std::string_view tag, std::uint64_t n) {
  return splitmix64(mix_seed(base, tag) + 0x632be59bd9b4e019ULL * (n + 1));
}

}  // namespace biasbench
