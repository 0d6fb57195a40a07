#include "dryfuse/manifest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "dryfuse/hash.hpp"
#include "dryfuse/image.hpp"

namespace dryfuse {

ManifestParseError::ManifestParseError(const std::string& message, std::size_t line,
                                       std::size_t column)
    : std::runtime_error("manifest line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Field {
  std::string text;
  std::size_t column;  // 1-based character column of the field start
};

std::vector<Field> split_line(const std::string& line, std::size_t line_no) {
  std::vector<Field> fields;
  std::size_t i = 0;
  while (true) {
    Field f{"", i + 1};
    if (i < line.size() && line[i] == '"') {
      ++i;
      while (true) {
        if (i >= line.size()) throw ManifestParseError("unterminated quoted field", line_no, f.column);
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            f.text += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        f.text += line[i++];
      }
      if (i < line.size() && line[i] != ',') {
        throw ManifestParseError("unexpected character after quoted field", line_no, i + 1);
      }
    } else {
      while (i < line.size() && line[i] != ',') f.text += line[i++];
    }
    fields.push_back(std::move(f));
    if (i >= line.size()) break;
    ++i;  // comma
  }
  return fields;
}

double parse_double(const Field& f, std::size_t line_no, const std::string& column) {
  double v = 0.0;
  const char* begin = f.text.data();
  const char* end = begin + f.text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ManifestParseError("column '" + column + "': not a number: '" + f.text + "'", line_no,
                             f.column);
  }
  return v;
}

int parse_int(const Field& f, std::size_t line_no, const std::string& column) {
  int v = 0;
  const char* begin = f.text.data();
  const char* end = begin + f.text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ManifestParseError("column '" + column + "': not an integer: '" + f.text + "'", line_no,
                             f.column);
  }
  return v;
}

}  // namespace

std::string manifest_text(const std::vector<DryingRecord>& records) {
  std::ostringstream out;
  for (std::size_t i = 0; i < kManifestColumns.size(); ++i) {
    out << (i ? "," : "") << kManifestColumns[i];
  }
  out << '\n';
  for (const auto& r : records) {
    out << quote(r.sample.sample_id) << ',' << quote(r.sample.run_id) << ','
        << format_number(r.conditions.temperature) << ',' << format_number(r.conditions.air_velocity)
        << ',' << format_number(r.conditions.drying_time) << ','
        << format_number(r.sample.initial_weight) << ',' << format_number(r.sample.final_weight)
        << ',' << format_number(r.sample.initial_mc) << ',' << r.slices_in_run << ','
        << quote(r.image_path) << '\n';
  }
  return out.str();
}

void write_manifest(const std::filesystem::path& path, const std::vector<DryingRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << manifest_text(records);
  if (!out) throw std::runtime_error("error writing manifest " + path.string());
}

std::vector<DryingRecord> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ManifestParseError("empty manifest", 1, 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line, line_no);
  if (header.size() != kManifestColumns.size()) {
    throw ManifestParseError("expected " + std::to_string(kManifestColumns.size()) +
                                 " header columns, found " + std::to_string(header.size()),
                             line_no, 1);
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].text != kManifestColumns[i]) {
      throw ManifestParseError("expected header column '" + kManifestColumns[i] + "', found '" +
                                   header[i].text + "'",
                               line_no, header[i].column);
    }
  }

  std::vector<DryingRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_line(line, line_no);
    if (f.size() != kManifestColumns.size()) {
      throw ManifestParseError("expected " + std::to_string(kManifestColumns.size()) +
                                   " fields, found " + std::to_string(f.size()),
                               line_no, 1);
    }
    DryingRecord r;
    r.sample.sample_id = f[0].text;
    r.sample.run_id = f[1].text;
    r.conditions.temperature = parse_double(f[2], line_no, kManifestColumns[2]);
    r.conditions.air_velocity = parse_double(f[3], line_no, kManifestColumns[3]);
    r.conditions.drying_time = parse_double(f[4], line_no, kManifestColumns[4]);
    r.sample.initial_weight = parse_double(f[5], line_no, kManifestColumns[5]);
    r.sample.final_weight = parse_double(f[6], line_no, kManifestColumns[6]);
    r.sample.initial_mc = parse_double(f[7], line_no, kManifestColumns[7]);
    r.slices_in_run = parse_int(f[8], line_no, kManifestColumns[8]);
    r.image_path = f[9].text;
    try {
      r.ground_truth_mc = compute_final_mc(r.sample);
    } catch (const DomainError&) {
      r.ground_truth_mc = std::numeric_limits<double>::quiet_NaN();
    }
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<DryingRecord> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(slurp(path));
}

std::size_t IngestResult::condition_count() const {
  std::set<std::pair<double, double>> combos;
  for (const auto& r : records) combos.emplace(r.conditions.temperature, r.conditions.air_velocity);
  return combos.size();
}

std::string IngestResult::summary() const {
  return std::to_string(records.size()) + " records, " + std::to_string(condition_count()) +
         " condition combos";
}

IngestResult ingest_manifest(const std::filesystem::path& manifest_path, bool strict) {
  IngestResult result;
  result.root = manifest_path.parent_path();
  result.records = read_manifest(manifest_path);

  std::map<std::string, std::size_t> seen_ids;
  std::map<std::string, std::size_t> first_in_run;
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    const std::size_t row = i + 1;
    auto fail = [&](const std::string& msg) { result.violations.push_back({row, msg}); };

    const auto v = validate_record(r, strict);
    for (const auto& violation : v.violations) fail(violation.field + ": " + violation.message);

    if (auto [it, inserted] = seen_ids.emplace(r.sample.sample_id, row); !inserted) {
      fail("sample_id: duplicate of row " + std::to_string(it->second));
    }
    if (auto [it, inserted] = first_in_run.emplace(r.sample.run_id, i); !inserted) {
      const auto& first = result.records[it->second];
      if (!(first.conditions == r.conditions) || first.slices_in_run != r.slices_in_run) {
        fail("run_id: conditions or slices_in_run disagree with row " +
             std::to_string(it->second + 1));
      }
    }

    const auto image = result.root / r.image_path;
    if (!std::filesystem::exists(image)) {
      fail("image_path: missing image " + image.string());
    } else {
      try {
        (void)read_png(image);
      } catch (const std::exception& e) {
        fail("image_path: cannot load " + image.string() + ": " + e.what());
      }
    }
  }
  std::map<std::string, int> run_sizes;
  for (const auto& r : result.records) ++run_sizes[r.sample.run_id];
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    if (run_sizes[r.sample.run_id] > r.slices_in_run) {
      result.violations.push_back({i + 1, "slices_in_run: run " + r.sample.run_id + " has " +
                                              std::to_string(run_sizes[r.sample.run_id]) +
                                              " rows but declares " +
                                              std::to_string(r.slices_in_run)});
    }
  }
  if (result.ok()) result.dataset_hash = dataset_hash(manifest_path);
  return result;
}

std::string dataset_hash(const std::filesystem::path& manifest_path) {
  const std::string text = slurp(manifest_path);
  Sha256 h;
  h.update(text);
  for (const auto& r : parse_manifest(text)) h.update_file(manifest_path.parent_path() / r.image_path);
  return h.hex_digest();
}

}  // namespace dryfuse
