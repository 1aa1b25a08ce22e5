#include "vbackcheck/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace vbackcheck {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

constexpr std::array<std::string_view, 9> kAbbreviations = {
    "e.g.", "i.e.", "etc.", "vs.", "mr.", "mrs.", "ms.", "dr.", "approx."};

// `end` is one past the '.' being examined.
bool ends_with_abbreviation(std::string_view text, std::size_t end) {
  std::size_t start = end;
  while (start > 0 && !is_space(text[start - 1])) --start;
  std::string word(text.substr(start, end - start));
  // Strip leading punctuation such as an opening parenthesis or quote.
  const auto first = std::find_if(word.begin(), word.end(),
                                  [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
  word.erase(word.begin(), first);
  std::transform(word.begin(), word.end(), word.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_sentences(std::string_view response) {
  std::vector<std::string> units;
  auto emit = [&](std::string_view piece) {
    const auto t = trim(piece);
    if (!t.empty()) units.emplace_back(t);
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < response.size()) {
    if (!is_terminator(response[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < response.size() && is_terminator(response[j])) ++j;
    // closing quotes/brackets stay with the sentence they close
    while (j < response.size() &&
           (response[j] == '"' || response[j] == '\'' || response[j] == ')' || response[j] == ']')) {
      ++j;
    }
    const bool at_boundary = j == response.size() || is_space(response[j]);
    const bool protected_abbrev = response[i] == '.' && j == i + 1 && ends_with_abbreviation(response, j);
    if (at_boundary && !protected_abbrev) {
      emit(response.substr(start, j - start));
      start = j;
    }
    i = j;
  }
  emit(response.substr(start));
  return units;
}

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

}  // namespace vbackcheck
