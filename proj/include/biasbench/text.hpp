#ifndef BIASBENCH_TEXT_HPP
#define BIASBENCH_TEXT_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace biasbench {

// Canonical sentence form used everywhere: Unicode NFC, internal whitespace
// runs collapsed to a single space, leading/trailing whitespace stripped.
// Invalid UTF-8 bytes are replaced with U+FFFD.
std::string normalize_text(std::string_view raw);

// Lowercased whitespace tokenization of an already-normalized sentence.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower(std::string_view text);

// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis);

// FNV-1a over a whole file's bytes, rendered as 16 hex digits.
std::string file_digest(const std::string& path);

std::string to_hex(std::uint64_t value);

}  // namespace biasbench

#endif  // BIASBENCH_TEXT_HPP
