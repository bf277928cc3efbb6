#pragma once

#include <span>
#include <string>
#include <vector>

#include "multiqa/corpus.hpp"
#include "multiqa/llm_client.hpp"
#include "multiqa/question.hpp"

namespace multiqa {

/// Which few-shot dialogue the verification-question generator gets.
/// negation_enabled adds the [NEGATION] tagging instruction and exemplars
/// for questions with negative constraints.
enum class VqgFlavor { standard, negation_enabled };

VqgFlavor vqg_flavor_from_string(const std::string& s);
std::string vqg_flavor_name(VqgFlavor f);

/// "(Title: ...) text" rendering used for every passage shown to a model.
std::string passage_snippet(const Passage& passage);

/// Reading prompt. independent requires exactly one passage, closed_book
/// requires none; concatenated takes the whole slice in rank order.
ChatRequest render_reading_prompt(const Question& question, std::span<const Passage> passages,
                                  ReadingMode mode);

/// Few-shot verification-question-generation dialogue. The instruction block
/// is carried as the system message; exemplars alternate user/assistant.
ChatRequest render_vqg_dialogue(const Question& question, VqgFlavor flavor);

/// True-or-false verification prompt over the gathered evidence passages.
ChatRequest render_verification_prompt(std::span<const Passage> evidence,
                                       const std::string& instantiated_question);

/// Judge prompt: asks for the 1-based index of the semantically matching
/// gold answer, or the literal "None".
ChatRequest render_judge_prompt(const std::string& question,
                                const std::vector<std::vector<std::string>>& gold_aliases,
                                const std::string& prediction);

/// Extracts bulleted answers ("*" or "-" markers) from a model response.
/// Returns [] for the abstention phrase "There is no answer" (case- and
/// punctuation-tolerant) and for unparseable text; bullets win when both
/// appear. Never throws.
std::vector<std::string> parse_answer_list(const std::string& raw);

/// Does the response abstain rather than list answers?
bool is_abstention(const std::string& raw);

struct VqgLine {
    std::string text;      // placeholder normalized to [answer]
    bool negated = false;  // trailing [NEGATION] tag was present (and stripped)
};

/// Splits a VQG response into bulleted question lines. Throws ParseError if
/// the "Verification Questions:" section is missing or holds no bullets.
std::vector<VqgLine> parse_vqg_response(const std::string& raw);

/// Exactly-one-placeholder check for a verification question template.
bool has_single_placeholder(const std::string& question_template);

/// Replaces the [answer] placeholder with the candidate surface, verbatim.
std::string fill_placeholder(const std::string& question_template, const std::string& surface);

inline constexpr const char* kAnswerPlaceholder = "[answer]";
inline constexpr const char* kAbstentionPhrase = "There is no answer";

}  // namespace multiqa
