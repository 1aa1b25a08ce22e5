#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "vbackcheck/backends.hpp"
#include "vbackcheck/errors.hpp"
#include "vbackcheck/text.hpp"

namespace vbackcheck::backends {

std::string normalize_query(std::string_view query) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw ConfigError("ICU NFC normalizer unavailable");

  icu::UnicodeString text = icu::UnicodeString::fromUTF8(
      icu::StringPiece(query.data(), static_cast<int32_t>(query.size())));
  text.foldCase();
  icu::UnicodeString normalized = nfc->normalize(text, status);
  if (U_FAILURE(status)) throw FormatError("query is not valid text");

  std::string utf8;
  normalized.toUTF8String(utf8);

  std::string collapsed;
  collapsed.reserve(utf8.size());
  bool pending_space = false;
  for (char c : trim(utf8)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = true;
      continue;
    }
    if (pending_space) collapsed += ' ';
    pending_space = false;
    collapsed += c;
  }
  return collapsed;
}

}  // namespace vbackcheck::backends
