#include "multiqa/prompts.hpp"

#include <cctype>
#include <sstream>

#include "multiqa/errors.hpp"
#include "multiqa/text.hpp"

namespace multiqa {

namespace {

constexpr const char* kReadingInstruction =
    "Read the following snippet(s) from Wikipedia documents carefully to find all the correct "
    "answers to the question. There could be multiple answers, one answer, or no answer. Do NOT "
    "generate additional descriptions/aliases/explanations! Generate the answers in the form of "
    "an unordered list as required below.\n"
    "\n"
    "Start each answer with an asterisk and end with a new line. Your response should be in the "
    "following format if there are correct answers supported by the document snippets:\n"
    "\n"
    "* Answer 1\n"
    "* Answer 2\n"
    "...\n"
    "\n"
    "Or, if there is no correct answer, respond literally \"There is no answer.\" without "
    "generating an unordered list.\n"
    "\n"
    "REMINDERS:\n"
    "\n"
    "* Please answer the question PURELY based on the documents provided. DO NOT use any "
    "additional knowledge not present in the documents.\n"
    "* If the document is irrelevant to the question, do NOT use your own knowledge to answer it "
    "and just say \"There is no answer\".\n"
    "* You should either give a list of answers as required above, or say \"There is no "
    "answer\". No other forms of response are accepted.\n"
    "\n"
    "Document Snippet(s):\n";

constexpr const char* kClosedBookTemplate =
    "Given a multi-answer web search question, generate ALL the answers that you know to this "
    "question. Do NOT generate additional descriptions/aliases/explanations! Please generate the "
    "answers in the form of an unordered list as required below:\n"
    "\n"
    "Start each answer with an asterisk and end with a new line. Your response should look like "
    "this:\n"
    "* Answer 1\n"
    "* Answer 2\n"
    "...\n"
    "\n"
    "Now answer this question: ";

constexpr const char* kVqgInstructionCommon =
    "I am trying to answer questions that have many correct answers. I now have a set of answers "
    "for each question but some of them are incorrect and noisy. So, based on my web search "
    "questions that have many correct answers, generate 2-3 verification questions so that I can "
    "use those questions to filter my answer sets. Verification questions should always be "
    "true-or-false questions. I will retain the answer item if an answer item appears true to "
    "the question and filter out the answer items otherwise. Here are some requirements for your "
    "response:\n"
    "* You should always first ask an easy category-checking question to verify whether the "
    "answer entity belongs to the correct category.\n"
    "* The second or third question should purely be based on my original web search query. NO "
    "questions shall use inferred facts or external knowledge.\n"
    "* Start by thinking about what questions are suitable to ask. Begin your thought with "
    "\"Thought: \"\n"
    "* After your thought, begin asking questions after \"Verification Questions: \". Start "
    "each question with a new line and an asterisk. Do NOT generate anything else after the "
    "questions.\n"
    "* In the verification question, when you refer to the answer item, please leave it as "
    "[answer] and enclose it with double quotes so that I can later fill it in with items in my "
    "answer set.";

constexpr const char* kVqgNegationRule =
    "\n* When you try to verify whether an answer does NOT have certain properties or features, "
    "ask the question in positive form and label the question with a [NEGATION] tag at the end "
    "of the question. I will retain the answers that appear false to the tagged question.";

constexpr const char* kVerificationInstruction =
    "Read the following document(s) carefully to answer the true-or-false question below. If the "
    "document provided is irrelevant or insufficient, then answer \"False\". Answer \"True\" if "
    "there is sufficient evidence in the document. Do not add additional description or "
    "explanation, and the answer can only be \"True\" or \"False\". Begin your response with "
    "\"Answer: ...\".";

struct VqgExemplar {
    const char* question;
    const char* response;
};

const VqgExemplar kStandardExemplars[] = {
    {"Which album has John Reuben as performer?",
     "Thought: To verify if an answer item is a correct album with John Reuben as the performer, "
     "the first question should confirm whether the item belongs to the category of music "
     "albums. The subsequent question should directly relate to the web search query by asking "
     "if John Reuben is credited as the performer on the album.\n"
     "Verification Questions: \n"
     "* Is \"[answer]\" a music album?\n"
     "* Is John Reuben credited as a performer on the music album \"[answer]\"?"},
    {"What film was directed by Radha Mohan and produced by Prakash Raj?",
     "Thought: To filter answers effectively, the first question should confirm that the answer "
     "is a film. The second question will verify if the film was directed by Radha Mohan. The "
     "third question will confirm if the film was produced by Prakash Raj.\n"
     "Verification Questions: \n"
     "* Is \"[answer]\" a film?\n"
     "* Was the film \"[answer]\" directed by Radha Mohan?\n"
     "* Was the film \"[answer]\" produced by Prakash Raj?"},
    {"Who was director of a movie penned by Christina Hodson?",
     "Thought: To filter answers effectively, the first question should confirm that the answer "
     "is a person. The second question will verify if there is a movie written by Christina "
     "Hodson and directed by this person.\n"
     "Verification Questions: \n"
     "* Is \"[answer]\" a director's name?\n"
     "* Is there a movie that is directed by \"[answer]\" and written by Christina Hodson?"},
};

const VqgExemplar kNegationExemplars[] = {
    {"What highway system located in Tottori Prefecture is not maintained by Tottori Prefecture",
     "Thought: To verify if an answer item is a correct highway system located in Tottori "
     "Prefecture but not maintained by Tottori Prefecture, the first question should confirm "
     "whether the item belongs to the category of highway system. The subsequent questions "
     "should check whether this highway system is located in the Tottori Prefecture and "
     "meanwhile not maintained by Tottori Prefecture. I will use the [NEGATION] tag to filter "
     "out the highway systems maintained by the Tottori Prefecture.\n"
     "Verification Questions: \n"
     "* Is \"[answer]\" a highway system?\n"
     "* Is the highway system \"[answer]\" located in Tottori Prefecture?\n"
     "* Is the highway system \"[answer]\" maintained by Tottori Prefecture? [NEGATION]"},
    {"Which Sunni Islam figures weren't Sufist?",
     "Thought: To filter answers effectively, the first question should confirm that the answer "
     "is a Sunni Islam figure. Then, the second question will verify whether this Sunni Islam "
     "figure was Sufist, which I will tag it with [NEGATION].\n"
     "Verification Questions: \n"
     "* Is \"[answer]\" a Sunni Islam figure?\n"
     "* Was the Sunni Islam figure \"[answer]\" Sufist? [NEGATION]"},
    {"People who played for the Sheffield Wednesday F.C. and the Lincoln City F.C.",
     "Thought: To filter answers effectively, the first question should confirm that the answer "
     "is a person's name. The second question will verify if this person played for Sheffield "
     "Wednesday F.C. The third question will check if this person also played for Lincoln City "
     "F.C.\n"
     "Verification Questions: \n"
     "* Is \"[answer]\" a person's name?\n"
     "* Has \"[answer]\" ever played for the Sheffield Wednesday F.C.?\n"
     "* Has \"[answer]\" ever played for the Lincoln City F.C.?"},
};

/// Case-insensitive match of `needle` at position `pos`.
bool matches_at(const std::string& s, size_t pos, std::string_view needle) {
    if (pos + needle.size() > s.size()) return false;
    for (size_t i = 0; i < needle.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[pos + i])) !=
            std::tolower(static_cast<unsigned char>(needle[i]))) {
            return false;
        }
    }
    return true;
}

/// Rewrites any case variant of "[answer]" to the canonical lowercase form.
std::string normalize_placeholder(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '[' && matches_at(s, i, "[answer]")) {
            out += kAnswerPlaceholder;
            i += 8;
        } else {
            out.push_back(s[i]);
            ++i;
        }
    }
    return out;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(s);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

VqgFlavor vqg_flavor_from_string(const std::string& s) {
    if (s == "default" || s == "standard") return VqgFlavor::standard;
    if (s == "negation_enabled") return VqgFlavor::negation_enabled;
    throw ConfigError("unknown vqg flavor '" + s + "'");
}

std::string vqg_flavor_name(VqgFlavor f) {
    return f == VqgFlavor::standard ? "default" : "negation_enabled";
}

std::string passage_snippet(const Passage& passage) {
    return "(Title: " + passage.title + ") " + passage.text;
}

ChatRequest render_reading_prompt(const Question& question, std::span<const Passage> passages,
                                  ReadingMode mode) {
    if (mode == ReadingMode::independent && passages.size() != 1) {
        throw ContractError("independent reading takes exactly one passage");
    }
    if (mode == ReadingMode::closed_book && !passages.empty()) {
        throw ContractError("closed-book reading takes no passages");
    }

    ChatRequest request;
    std::string prompt;
    if (mode == ReadingMode::closed_book) {
        prompt = std::string(kClosedBookTemplate) + question.text;
    } else {
        prompt = kReadingInstruction;
        for (size_t i = 0; i < passages.size(); ++i) {
            if (i > 0) prompt += "\n\n";
            prompt += passage_snippet(passages[i]);
        }
        prompt += "\n\nQuestion: " + question.text;
    }
    request.messages.push_back({Role::user, std::move(prompt)});
    return request;
}

ChatRequest render_vqg_dialogue(const Question& question, VqgFlavor flavor) {
    ChatRequest request;
    std::string instruction = kVqgInstructionCommon;
    if (flavor == VqgFlavor::negation_enabled) instruction += kVqgNegationRule;
    request.messages.push_back({Role::system, std::move(instruction)});

    auto exemplars = flavor == VqgFlavor::negation_enabled
                         ? std::span<const VqgExemplar>(kNegationExemplars)
                         : std::span<const VqgExemplar>(kStandardExemplars);
    for (const auto& ex : exemplars) {
        request.messages.push_back(
            {Role::user, std::string("My web search question: ") + ex.question});
        request.messages.push_back({Role::assistant, ex.response});
    }
    request.messages.push_back({Role::user, "My web search question: " + question.text});
    return request;
}

ChatRequest render_verification_prompt(std::span<const Passage> evidence,
                                       const std::string& instantiated_question) {
    std::string prompt = kVerificationInstruction;
    prompt += "\n\n";
    for (size_t i = 0; i < evidence.size(); ++i) {
        if (i > 0) prompt += "\n\n";
        prompt += passage_snippet(evidence[i]);
    }
    prompt += "\n\nQuestion: " + instantiated_question + "\n\nAnswer: ";

    ChatRequest request;
    request.max_tokens = 8;
    request.messages.push_back({Role::user, std::move(prompt)});
    return request;
}

ChatRequest render_judge_prompt(const std::string& question,
                                const std::vector<std::vector<std::string>>& gold_aliases,
                                const std::string& prediction) {
    std::string prompt =
        "You are evaluating a predicted answer to a web search question against a numbered list "
        "of ground-truth answers. If the prediction semantically matches one of the ground-truth "
        "answers (tolerating formatting and minor vocabulary variations), output the index of "
        "that answer. Otherwise output \"None\". Output only the index or \"None\".\n"
        "\n"
        "Question: " +
        question +
        "\n"
        "\n"
        "Ground-truth answers:\n";
    for (size_t i = 0; i < gold_aliases.size(); ++i) {
        prompt += std::to_string(i + 1) + ". " + (gold_aliases[i].empty() ? "" : gold_aliases[i][0]);
        if (gold_aliases[i].size() > 1) {
            prompt += " (also known as: ";
            for (size_t j = 1; j < gold_aliases[i].size(); ++j) {
                if (j > 1) prompt += ", ";
                prompt += gold_aliases[i][j];
            }
            prompt += ")";
        }
        prompt += "\n";
    }
    prompt += "\nPrediction: " + prediction + "\n\nAnswer: ";

    ChatRequest request;
    request.max_tokens = 8;
    request.messages.push_back({Role::user, std::move(prompt)});
    return request;
}

bool is_abstention(const std::string& raw) {
    // Case- and punctuation-tolerant search for the abstention phrase.
    std::string squashed;
    squashed.reserve(raw.size());
    for (char c : raw) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            squashed.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            if (!squashed.empty() && squashed.back() != ' ') squashed.push_back(' ');
        }
    }
    return squashed.find("there is no answer") != std::string::npos;
}

std::vector<std::string> parse_answer_list(const std::string& raw) {
    std::vector<std::string> answers;
    for (const std::string& line : split_lines(raw)) {
        std::string t = trim(line);
        if (t.empty() || (t[0] != '*' && t[0] != '-')) continue;
        std::string body = trim(t.substr(1));
        if (!body.empty()) answers.push_back(std::move(body));
    }
    return answers;  // empty covers abstention and unparseable text alike
}

std::vector<VqgLine> parse_vqg_response(const std::string& raw) {
    const std::string anchor = "Verification Questions";
    size_t pos = raw.find(anchor);
    if (pos == std::string::npos) {
        throw ParseError("VQG response is missing the \"Verification Questions:\" section");
    }
    pos += anchor.size();
    if (pos < raw.size() && raw[pos] == ':') ++pos;

    std::vector<VqgLine> lines;
    for (const std::string& line : split_lines(raw.substr(pos))) {
        std::string t = trim(line);
        if (t.empty() || (t[0] != '*' && t[0] != '-')) continue;
        VqgLine vq;
        vq.text = trim(t.substr(1));
        // A trailing [NEGATION] tag flips retention polarity; strip it.
        if (vq.text.size() >= 10 && matches_at(vq.text, vq.text.size() - 10, "[negation]")) {
            vq.negated = true;
            vq.text = trim(vq.text.substr(0, vq.text.size() - 10));
        }
        vq.text = normalize_placeholder(vq.text);
        if (!vq.text.empty()) lines.push_back(std::move(vq));
    }
    if (lines.empty()) {
        throw ParseError("VQG response has no bulleted verification questions");
    }
    return lines;
}

bool has_single_placeholder(const std::string& question_template) {
    size_t count = 0;
    size_t pos = 0;
    const std::string needle = kAnswerPlaceholder;
    while ((pos = question_template.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count == 1;
}

std::string fill_placeholder(const std::string& question_template, const std::string& surface) {
    std::string out = question_template;
    const std::string needle = kAnswerPlaceholder;
    size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
        out.replace(pos, needle.size(), surface);
        pos += surface.size();
    }
    return out;
}

}  // namespace multiqa
