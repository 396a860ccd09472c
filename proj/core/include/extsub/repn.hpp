#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace extsub {

struct RepScore {
    std::size_t n = 4;
    std::vector<double> per_text; // 0..100 each
    double mean = 0.0;            // 0 for empty input
};

// Duplicated n-gram percentage: 100 * (1 - unique / total); 0 when the
// token list is shorter than n.
double rep_n(const std::vector<std::string> & tokens, std::size_t n);

std::vector<std::string> whitespace_tokenize(const std::string & text);

// One response per line; lines starting with '{' are treated as JSON with
// a "text" field.
RepScore score_file(const std::filesystem::path & path, std::size_t n);

} // namespace extsub
