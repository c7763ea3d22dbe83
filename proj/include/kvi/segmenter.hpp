#pragma once

#include <string_view>
#include <vector>

#include "kvi/capsule.hpp"

namespace kvi {

/// Splits on '.', '!' or '?' followed by whitespace or end of input, except
/// after a stoplisted abbreviation ("e.g.", "Fig.", "et al.", ...). Sentences
/// are trimmed, ids are "<doc_id>#s<index>" and the whole document is one
/// evidence block "<doc_id>#b0".
std::vector<Sentence> segment_sentences(std::string_view document_text, std::string_view doc_id);

/// Same splitting rule, text only.
std::vector<std::string> split_sentences(std::string_view text);

}  // namespace kvi
