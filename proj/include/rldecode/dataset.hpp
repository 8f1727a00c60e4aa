#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rldecode {

struct DatasetRecord {
  std::string id;
  std::string source;
  std::string reference;
};

/// JSON lines with keys id, source, reference. Throws IngestionError naming
/// the 1-based line number for malformed lines, missing or empty fields and
/// duplicate ids. Blank lines are skipped.
std::vector<DatasetRecord> load_dataset(const std::string& path);

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records);

/// Templated product-news documents with one-sentence abstractive
/// references ("<company> <verb> its <adj> <product> and <group> ... <reaction>
/// it."). Reference phrasing never occurs in the documents, so an n-gram model
/// trained on "document tldr reference" sequences ends summaries with EOS.
std::vector<DatasetRecord> make_toy_dataset(std::size_t n_records, std::uint64_t seed);

/// Default size of the generated toy set. Every non-eval record feeds the
/// n-gram model, so smaller sets leave its trigram counts thin.
inline constexpr std::size_t kToyDatasetSize = 2000;

}  // namespace rldecode
