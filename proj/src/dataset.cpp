#include "rldecode/dataset.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "rldecode/errors.hpp"
#include "rldecode/rng.hpp"

namespace rldecode {

using nlohmann::json;

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset: " + path);
  std::vector<DatasetRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error&) {
      throw IngestionError(where + "line is not valid JSON");
    }
    if (!doc.is_object()) throw IngestionError(where + "expected a JSON object");
    DatasetRecord rec;
    for (auto [key, field] : {std::pair{"id", &rec.id}, std::pair{"source", &rec.source},
                              std::pair{"reference", &rec.reference}}) {
      if (!doc.contains(key)) throw IngestionError(where + "missing key \"" + key + "\"");
      if (!doc[key].is_string()) throw IngestionError(where + "key \"" + key + "\" must be a string");
      *field = doc[key].get<std::string>();
      if (field->empty()) throw IngestionError(where + "key \"" + key + "\" is empty");
    }
    if (!ids.insert(rec.id).second) throw IngestionError(where + "duplicate id \"" + rec.id + "\"");
    records.push_back(std::move(rec));
  }
  return records;
}

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write dataset: " + path);
  for (const auto& r : records) {
    out << json{{"id", r.id}, {"source", r.source}, {"reference", r.reference}}.dump() << '\n';
  }
}

namespace {

template <typename T, std::size_t N>
const T& pick(const T (&items)[N], Rng& rng) {
  return items[rng.below(N)];
}

const char* const kCompanies[] = {"acme",   "globex", "initech", "umbrella", "vandelay", "hooli",
                                  "stark",  "wayne",  "tyrell",  "cyberdyne", "wonka",   "soylent"};
const char* const kProducts[] = {"battery", "scanner", "turbine", "platform", "engine",  "vaccine",
                                 "sensor",  "drone",   "network", "database", "printer", "robot"};
const char* const kCities[] = {"boston", "denver", "austin", "seattle", "chicago", "atlanta",
                               "dallas", "phoenix", "portland", "detroit"};
const char* const kVerbs[] = {"announced", "released", "unveiled", "launched", "revealed", "presented"};
const char* const kAdjectives[] = {"cheaper", "faster", "smaller", "stronger", "cleaner", "smarter"};
const char* const kPeople[] = {"analysts", "investors", "customers", "engineers", "regulators", "critics"};
const char* const kReactions[] = {"praised", "questioned", "welcomed", "doubted", "celebrated", "criticized"};
const char* const kFillers[] = {
    "the company said that the new product is the result of years of work",
    "the company said that the team will continue to work on the product",
    "the report said that the market for the product is growing",
    "the chief executive said that the company is proud of the team",
    "the company said that more details will be shared later this year",
    "the report said that the company expects strong demand",
};

}  // namespace

std::vector<DatasetRecord> make_toy_dataset(std::size_t n_records, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DatasetRecord> out;
  out.reserve(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    const std::string company = pick(kCompanies, rng);
    const std::string product = pick(kProducts, rng);
    const std::string city = pick(kCities, rng);
    const std::string verb = pick(kVerbs, rng);
    const std::string adj = pick(kAdjectives, rng);
    const std::string reaction = pick(kReactions, rng);

    // 1-4 distinct groups react. Lists mostly continue after "and <group>",
    // which is what sends argmax decoding of the summary into a loop.
    std::vector<std::string> groups(std::begin(kPeople), std::end(kPeople));
    shuffle(groups, rng);
    groups.resize(1 + rng.below(4));

    std::vector<std::string> sentences;
    sentences.push_back(company + " has " + verb + " a new " + product + " in " + city + ".");
    sentences.push_back("the " + product + " is " + adj + " than the previous model.");
    std::vector<std::string> body;
    for (const auto& g : groups) body.push_back(g + " have " + reaction + " the " + product + ".");
    const std::size_t n_fill = 2 + rng.below(4);
    for (std::size_t f = 0; f < n_fill; ++f) body.push_back(std::string(pick(kFillers, rng)) + ".");
    shuffle(body, rng);
    sentences.insert(sentences.end(), body.begin(), body.end());

    std::string source;
    for (const auto& s : sentences) source += (source.empty() ? "" : " ") + s;

    std::string summary = company + " " + verb + " its " + adj + " " + product;
    for (const auto& g : groups) summary += " and " + g;
    summary += " " + reaction + " it.";
    out.push_back({"toy-" + std::to_string(i), source, summary});
  }
  return out;
}

}  // namespace rldecode
