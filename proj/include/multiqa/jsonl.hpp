#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "multiqa/errors.hpp"

namespace multiqa {

using json = nlohmann::json;

/// Calls fn(record, line_number) for every non-blank line. Throws ParseError
/// with the offending 1-based line number on invalid JSON.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, long)>& fn) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw ParseError("invalid JSON in " + path.string(), line_no);
        fn(rec, line_no);
    }
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> records;
    for_each_jsonl(path, [&](const json& rec, long) { records.push_back(rec); });
    return records;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw NotFoundError("cannot write " + path.string());
    for (const auto& rec : records) out << rec.dump() << '\n';
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw NotFoundError("cannot write " + path.string());
    out << content;
}

}  // namespace multiqa
