#include "piiprobe/corpus.hpp"

#include <fstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"

namespace piiprobe {

using nlohmann::json;

std::size_t stream_corpus(const std::string& path,
                          const std::function<void(const Document&)>& on_doc) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open corpus: " + path);

    std::size_t skipped = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object() || !j.contains("doc_id") || !j.contains("text") ||
            !j["doc_id"].is_string() || !j["text"].is_string()) {
            ++skipped;
            continue;
        }
        Document doc{j["doc_id"].get<std::string>(), j["text"].get<std::string>()};
        on_doc(doc);
    }
    return skipped;
}

std::vector<Document> read_corpus(const std::string& path, std::size_t* skipped) {
    std::vector<Document> docs;
    std::size_t n = stream_corpus(path, [&](const Document& d) { docs.push_back(d); });
    if (skipped) *skipped = n;
    return docs;
}

void write_corpus(const std::string& path, const std::vector<Document>& docs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    for (const auto& d : docs) {
        json j;
        j["doc_id"] = d.doc_id;
        j["text"] = d.text;
        out << j.dump() << "\n";
    }
}

} // namespace piiprobe
