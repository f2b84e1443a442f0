#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace piiprobe {

struct Document {
    std::string doc_id;
    std::string text;
};

// Streams a JSONL corpus ({"doc_id": ..., "text": ...} per line). Malformed
// lines are skipped and counted, an unreadable file throws CorpusIoError.
// Returns the number of skipped lines.
std::size_t stream_corpus(const std::string& path,
                          const std::function<void(const Document&)>& on_doc);

std::vector<Document> read_corpus(const std::string& path, std::size_t* skipped = nullptr);

void write_corpus(const std::string& path, const std::vector<Document>& docs);

} // namespace piiprobe
