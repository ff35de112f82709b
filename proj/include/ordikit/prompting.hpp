#pragma once

#include <cctype>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ordikit/corpus.hpp"
#include "ordikit/error.hpp"
#include "ordikit/io.hpp"

namespace ordikit {

/// Zero-shot instruction prompt. `{letters}` in the instruction expands to the
/// bracketed option list, e.g. "[A, B, C, D, E]".
struct PromptTemplate {
  std::string instruction =
      "Answer the following multiple-choice question by giving the most appropriate response. "
      "The answer should be one of {letters}.";
  std::string response_prefix = "Answer:";

  static PromptTemplate from_json(const json& j) {
    PromptTemplate t;
    if (j.contains("instruction")) t.instruction = j["instruction"].get<std::string>();
    if (j.contains("response_prefix")) t.response_prefix = j["response_prefix"].get<std::string>();
    if (t.response_prefix.empty()) fail("bad_template", "response_prefix must not be empty");
    return t;
  }
};

inline std::string bracket_letters(std::span<const char> letters) {
  std::string out = "[";
  for (std::size_t i = 0; i < letters.size(); ++i) {
    if (i) out += ", ";
    out += letters[i];
  }
  return out + "]";
}

/// Layout (frozen, the gateway cache keys on its hash):
///
///   <instruction>\n\n<stem>\nA. <text>\n...\n<response_prefix>
inline std::string render_prompt(const Question& q, const PromptTemplate& t,
                                 std::span<const char> option_letters) {
  const auto own = q.option_letters();
  if (!std::equal(own.begin(), own.end(), option_letters.begin(), option_letters.end())) {
    fail("option_mismatch", "template letters " + bracket_letters(option_letters) +
                                " do not match question '" + q.id + "' options " + bracket_letters(own),
         {q.id});
  }
  std::string instruction = t.instruction;
  const std::string placeholder = "{letters}";
  for (auto pos = instruction.find(placeholder); pos != std::string::npos;
       pos = instruction.find(placeholder, pos)) {
    const std::string letters = bracket_letters(option_letters);
    instruction.replace(pos, placeholder.size(), letters);
    pos += letters.size();
  }
  std::string out = instruction;
  out += "\n\n";
  out += q.stem;
  out += '\n';
  for (const auto& [letter, text] : q.options) {
    out += letter;
    out += ". ";
    out += text;
    out += '\n';
  }
  out += t.response_prefix;
  return out;
}

inline std::string render_prompt(const Question& q, const PromptTemplate& t = {}) {
  const auto letters = q.option_letters();
  return render_prompt(q, t, letters);
}

/// First option letter that stands alone as a token: not adjacent to another
/// letter or digit. "B) foo" -> B, "I don't know" -> nullopt. Lower-case
/// letters never match.
inline std::optional<char> parse_answer(const std::string& completion, std::span<const char> option_letters) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
  for (std::size_t i = 0; i < completion.size(); ++i) {
    const char c = completion[i];
    if (!std::isupper(static_cast<unsigned char>(c))) continue;
    const bool left_ok = i == 0 || !is_word(completion[i - 1]);
    const bool right_ok = i + 1 == completion.size() || !is_word(completion[i + 1]);
    if (!left_ok || !right_ok) continue;
    // An apostrophe continues a word ("I'm").
    if (i + 1 < completion.size() && completion[i + 1] == '\'') continue;
    for (char letter : option_letters) {
      if (letter == c) return c;
    }
  }
  return std::nullopt;
}

}  // namespace ordikit
