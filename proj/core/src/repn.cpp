#include "extsub/repn.hpp"

#include "extsub/errors.hpp"

#include <json.hpp>

#include <cctype>
#include <fstream>
#include <unordered_set>

namespace extsub {

double rep_n(const std::vector<std::string> & tokens, std::size_t n) {
    if (n == 0) {
        throw invalid_argument_error("n must be >= 1");
    }
    if (tokens.size() < n) return 0.0;
    const std::size_t total = tokens.size() - n + 1;

    std::unordered_set<std::string> unique;
    unique.reserve(total);
    for (std::size_t i = 0; i < total; i++) {
        std::string gram;
        for (std::size_t j = 0; j < n; j++) {
            gram += tokens[i + j];
            gram += '\x1f'; // separator tokens cannot contain
        }
        unique.insert(std::move(gram));
    }
    return 100.0 * (1.0 - (double)unique.size() / (double)total);
}

std::vector<std::string> whitespace_tokenize(const std::string & text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isspace((unsigned char)c)) {
            if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

RepScore score_file(const std::filesystem::path & path, std::size_t n) {
    std::ifstream file(path);
    if (!file) {
        throw io_failure("cannot open " + path.string());
    }

    RepScore score;
    score.n = n;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        line_no++;
        std::string text = line;
        // JSON-lines mode: {"text": "..."}
        if (!line.empty() && line.front() == '{') {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception & e) {
                throw malformed_line("line " + std::to_string(line_no) + ": " + e.what());
            }
            if (!j.contains("text") || !j["text"].is_string()) {
                throw malformed_line("line " + std::to_string(line_no) +
                                     ": missing string field 'text'");
            }
            text = j["text"].get<std::string>();
        }
        score.per_text.push_back(rep_n(whitespace_tokenize(text), n));
    }

    double sum = 0.0;
    for (double v : score.per_text) sum += v;
    score.mean = score.per_text.empty() ? 0.0 : sum / (double)score.per_text.size();
    return score;
}

} // namespace extsub
