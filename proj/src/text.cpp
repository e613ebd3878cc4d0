#include "biasbench/text.hpp"

#include <unicode/uchar.h>
#include <unicode/unorm2.h>
#include <unicode/ustring.h>
#include <unicode/utf8.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "biasbench/common.hpp"

namespace biasbench {

namespace {

std::u16string utf8_to_utf16(std::string_view raw) {
  std::u16string out(raw.size() + 1, u'\0');
  UErrorCode ec = U_ZERO_ERROR;
  int32_t written = 0;
  u_strFromUTF8WithSub(reinterpret_cast<UChar*>(out.data()),
                       static_cast<int32_t>(out.size()), &written, raw.data(),
                       static_cast<int32_t>(raw.size()), 0xFFFD, nullptr, &ec);
  if (U_FAILURE(ec)) fail(ErrorKind::Parse, std::string("utf-8 decode: ") + u_errorName(ec));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::string utf16_to_utf8(const std::u16string& text) {
  std::string out(text.size() * 4 + 1, '\0');
  UErrorCode ec = U_ZERO_ERROR;
  int32_t written = 0;
  u_strToUTF8(out.data(), static_cast<int32_t>(out.size()), &written,
              reinterpret_cast<const UChar*>(text.data()),
              static_cast<int32_t>(text.size()), &ec);
  if (U_FAILURE(ec)) fail(ErrorKind::Internal, std::string("utf-8 encode: ") + u_errorName(ec));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::u16string nfc(const std::u16string& text) {
  UErrorCode ec = U_ZERO_ERROR;
  const UNormalizer2* norm = unorm2_getNFCInstance(&ec);
  if (U_FAILURE(ec)) fail(ErrorKind::Internal, std::string("nfc instance: ") + u_errorName(ec));
  std::u16string out(text.size() * 3 + 16, u'\0');
  int32_t written = unorm2_normalize(norm, reinterpret_cast<const UChar*>(text.data()),
                                     static_cast<int32_t>(text.size()),
                                     reinterpret_cast<UChar*>(out.data()),
                                     static_cast<int32_t>(out.size()), &ec);
  if (U_FAILURE(ec)) fail(ErrorKind::Parse, std::string("nfc normalize: ") + u_errorName(ec));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

bool is_space(UChar32 c) {
  return u_isUWhiteSpace(c) || c == 0x200B;  // treat zero-width space as a break
}

}  // namespace

std::string normalize_text(std::string_view raw) {
  std::u16string wide = nfc(utf8_to_utf16(raw));
  std::u16string collapsed;
  collapsed.reserve(wide.size());
  bool pending_space = false;
  int32_t i = 0;
  const int32_t n = static_cast<int32_t>(wide.size());
  while (i < n) {
    int32_t start = i;
    UChar32 c;
    U16_NEXT(wide.data(), i, n, c);
    if (is_space(c)) {
      if (!collapsed.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      collapsed.push_back(u' ');
      pending_space = false;
    }
    collapsed.append(wide, static_cast<std::size_t>(start),
                     static_cast<std::size_t>(i - start));
  }
  return utf16_to_utf8(collapsed);
}

std::string to_lower(std::string_view text) {
  std::u16string wide = utf8_to_utf16(text);
  std::u16string lowered;
  lowered.reserve(wide.size());
  int32_t i = 0;
  const int32_t n = static_cast<int32_t>(wide.size());
  while (i < n) {
    UChar32 c;
    U16_NEXT(wide.data(), i, n, c);
    UChar32 lc = u_tolower(c);
    char16_t buf[2];
    std::size_t len = 0;
    U16_APPEND_UNSAFE(buf, len, lc);
    lowered.append(buf, len);
  }
  return utf16_to_utf8(lowered);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string lowered = to_lower(text);
  const char* data = lowered.data();
  int32_t i = 0;
  const int32_t n = static_cast<int32_t>(lowered.size());
  int32_t token_start = -1;
  while (i < n) {
    int32_t here = i;
    UChar32 c;
    U8_NEXT(data, i, n, c);
    if (c < 0) c = 0xFFFD;
    if (is_space(c)) {
      if (token_start >= 0) {
        tokens.emplace_back(lowered.substr(static_cast<std::size_t>(token_start),
                                           static_cast<std::size_t>(here - token_start)));
        token_start = -1;
      }
    } else if (token_start < 0) {
      token_start = here;
    }
  }
  if (token_start >= 0) {
    tokens.emplace_back(lowered.substr(static_cast<std::size_t>(token_start)));
  }
  return tokens;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = basis;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view data) {
  return fnv1a64(data.data(), data.size(), 0xcbf29ce484222325ULL);
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open file for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 65536> buf;
  while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0) {
    h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  return to_hex(h);
}

}  // namespace biasbench
