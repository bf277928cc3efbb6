#pragma once

#include <string>

namespace multiqa {

enum class QuestionType { simple, intersection, composition, unknown };

QuestionType question_type_from_string(const std::string& s);
std::string question_type_name(QuestionType t);

struct Question {
    std::string id;
    std::string text;
    std::string dataset_tag;
    QuestionType question_type = QuestionType::unknown;
};

enum class ReadingMode { independent, concatenated, closed_book };

ReadingMode reading_mode_from_string(const std::string& s);
std::string reading_mode_name(ReadingMode m);

}  // namespace multiqa
