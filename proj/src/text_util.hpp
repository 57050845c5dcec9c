#pragma once

// Internal text helpers shared by the model-output parsers.

#include <cstdint>
#include <string>
#include <vector>

namespace cairdd::text {

std::string trim(const std::string& s);
std::string to_lower(std::string s);

// runs of whitespace collapsed to a single space, ends trimmed
std::string collapse_ws(const std::string& s);

std::vector<std::string> split_lines(const std::string& s);

// case-insensitive literal match at position
bool starts_with_ci(const std::string& s, std::size_t pos, const char* lit);

// Decodes literal \n \t \r \" \' \\ \uXXXX sequences. Some model outputs
// arrive double-encoded, so decoding repeats (bounded) while escape
// sequences remain. CR and CRLF normalize to LF.
std::string unescape_model_text(const std::string& s);

// drops ``` fence lines wholesale
std::string strip_code_fences(const std::string& s);

// strips spaces, tabs, '*', '_' and '\' from both ends
std::string strip_decor(const std::string& s);

// strip_decor, then one layer of wrapping quotes, then whitespace collapse
std::string clean_title(const std::string& s);

}  // namespace cairdd::text
