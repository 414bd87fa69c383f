#pragma once

#include <string>
#include <utility>
#include <vector>

namespace duplex {

// Non-empty lines of a UTF-8 text file, one document per line.
std::vector<std::string> read_lines(const std::string& path);

// Tab-separated "id<TAB>text" records (documents, queries).
std::vector<std::pair<std::string, std::string>> read_id_text_tsv(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

bool file_exists(const std::string& path);

}  // namespace duplex
