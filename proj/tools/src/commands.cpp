#include "commands.hpp"

#include <fstream>

#include "json.hpp"

#include "copaint/errors.hpp"
#include "copaint/io.hpp"

namespace copaint::service {

namespace fs = std::filesystem;

GapInput read_gap_pairs(const fs::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw IoError("cannot read " + jsonl.string());
  const fs::path base = jsonl.parent_path();
  GapInput out;
  std::vector<double> scores;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = jsonl.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      GapPair p;
      p.id = j.at("id").get<std::string>();
      p.a = read_png(base / j.at("a").get<std::string>());
      p.b = read_png(base / j.at("b").get<std::string>());
      const bool has_score = j.contains("text_score") && !j["text_score"].is_null();
      if (!out.pairs.empty() && has_score != !scores.empty())
        throw FormatError("text_score must be given on every line or none");
      if (has_score) scores.push_back(j["text_score"].get<double>());
      out.pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (!scores.empty()) out.text_scores = std::move(scores);
  return out;
}

DatasetSummary generate_dataset(const fs::path& corpus, const fs::path& out, const PipelineConfig& cfg) {
  const PipelineResult result = run_pipeline(read_corpus(corpus), cfg);
  const auto entries = export_dataset(result.pairs, out);
  DatasetSummary s;
  s.pairs = result.pairs.size();
  s.kept = entries.size();
  for (const auto& p : result.pairs) s.undecided += p.filter.undecided;
  s.log = result.log;
  return s;
}

}  // namespace copaint::service
