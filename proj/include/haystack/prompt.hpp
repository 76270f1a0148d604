#pragma once

#include <string>

#include "haystack/language.hpp"

namespace haystack {

enum class PromptMode { Chat, Completion };

struct Prompt {
  PromptMode mode = PromptMode::Chat;
  LanguageCode prompt_lang;
  bool strict_format = true;
  std::string text;
  std::string question_text;
};

}  // namespace haystack
