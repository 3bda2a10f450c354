#include "ttaood/score_file.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"

namespace ttaood {
namespace fs = std::filesystem;
using nlohmann::json;

void ScoreFile::validate() const {
  if (sample_ids.size() != scores.size()) {
    throw DataError("score file has " + std::to_string(sample_ids.size()) + " ids but " +
                    std::to_string(scores.size()) + " scores");
  }
  if (scores.empty()) throw DataError("score file is empty");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw DataError("non-finite score for sample '" + sample_ids[i] + "'");
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : sample_ids) {
    if (!seen.insert(id).second) throw DataError("duplicate sample id '" + id + "' in score file");
  }
}

bool operator==(const ScoreFile& a, const ScoreFile& b) {
  return a.sample_ids == b.sample_ids && a.scorer_id == b.scorer_id && a.view == b.view &&
         a.config == b.config && a.scores.size() == b.scores.size() &&
         std::memcmp(a.scores.data(), b.scores.data(), a.scores.size() * sizeof(double)) == 0;
}

fs::path sidecar_path(const fs::path& csv) { return fs::path(csv.string() + ".json"); }

std::string format_exact(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return {buf.data(), res.ptr};
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of("\r\n") != std::string::npos) {
    throw DataError("CSV field contains a line break: '" + text + "'");
  }
  if (text.find_first_of(",\"") == std::string::npos) return text;
  std::string out = "\"";
  for (const char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  if (quoted) throw DataError("unterminated quote in CSV line: " + line);
  fields.push_back(std::move(current));
  return fields;
}

void write_score_file(const ScoreFile& scores, const fs::path& csv) {
  scores.validate();
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  std::string body = "sample_id,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    body += csv_field(scores.sample_ids[i]) + "," + format_exact(scores.scores[i]) + "\n";
  }
  binio::write_text(csv, body);

  json meta{{"scorer_id", scores.scorer_id},
            {"view", scores.view},
            {"orientation", kOodPositive},
            {"n", scores.size()},
            {"config", scores.config}};
  binio::write_text(sidecar_path(csv), meta.dump(1) + "\n");
}

ScoreFile read_score_file(const fs::path& csv) {
  ScoreFile out;
  std::istringstream in(binio::read_text(csv));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"sample_id", "score"}) {
    throw DataError("malformed score CSV " + csv.string() + ": expected header 'sample_id,score'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw DataError("malformed score CSV row: " + line);
    double v = 0.0;
    const auto& s = fields[1];
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw DataError("malformed score value '" + s + "'");
    }
    out.sample_ids.push_back(fields[0]);
    out.scores.push_back(v);
  }

  const auto sidecar = sidecar_path(csv);
  if (!fs::is_regular_file(sidecar)) throw DataError("missing file: " + sidecar.string());
  try {
    const json meta = json::parse(binio::read_text(sidecar));
    if (meta.at("orientation").get<std::string>() != kOodPositive) {
      throw DataError("score file orientation must be '" + std::string(kOodPositive) + "'");
    }
    out.scorer_id = meta.at("scorer_id").get<std::string>();
    out.view = meta.at("view").get<std::string>();
    out.config = meta.value("config", json::object());
    if (meta.at("n").get<std::size_t>() != out.scores.size()) {
      throw DataError("score sidecar count disagrees with CSV rows");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed score sidecar: ") + e.what());
  }
  out.validate();
  return out;
}

}  // namespace ttaood
