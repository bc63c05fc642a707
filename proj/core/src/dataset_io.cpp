#include "scsmiv/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "scsmiv/error.hpp"

namespace scsmiv {

namespace {

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRow> read_rows(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t line = 0;
  std::size_t pos = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (raw.find_first_not_of(" \t") == std::string_view::npos) continue;
    rows.push_back({line, split_csv_line(raw)});
  }
  return rows;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void parse_error(std::string_view file, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, std::string(file) + ":" + std::to_string(line) + ": " + what);
}

double parse_real(std::string_view file, std::size_t line, const std::string& column, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last) {
    parse_error(file, line, "column '" + column + "': cannot parse '" + text + "' as a number");
  }
  return v;
}

int parse_binary(std::string_view file, std::size_t line, const std::string& column, const std::string& text) {
  const double v = parse_real(file, line, column, text);
  if (v != 0.0 && v != 1.0) parse_error(file, line, "column '" + column + "' must be 0 or 1, got '" + text + "'");
  return static_cast<int>(v);
}

std::map<std::string, std::size_t> header_index(const CsvRow& header, std::string_view file,
                                                std::initializer_list<const char*> required) {
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < header.fields.size(); ++c) {
    const std::string name = trim(header.fields[c]);
    if (!index.emplace(name, c).second) parse_error(file, header.line, "duplicate column '" + name + "'");
  }
  for (const char* name : required) {
    if (!index.count(name)) {
      throw Error(ErrorCode::MissingColumn,
                  std::string(file) + ":" + std::to_string(header.line) + ": missing column '" + name + "'");
    }
  }
  return index;
}

const std::string& field(const CsvRow& row, std::size_t c, std::string_view file, std::size_t width) {
  if (row.fields.size() != width) {
    parse_error(file, row.line,
                "expected " + std::to_string(width) + " fields, found " + std::to_string(row.fields.size()));
  }
  return row.fields[c];
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<SubjectRecord> parse_dataset_text(std::string_view subjects_csv, std::string_view subjects_name,
                                              std::optional<std::string_view> treatment_csv,
                                              std::string_view treatment_name) {
  const auto rows = read_rows(subjects_csv);
  if (rows.empty()) {
    throw Error(ErrorCode::MissingColumn, std::string(subjects_name) + ":1: empty file, missing column 'id'");
  }
  const auto index = header_index(rows.front(), subjects_name, {"id", "time", "status", "z"});
  const std::size_t width = rows.front().fields.size();
  std::vector<std::pair<std::string, std::size_t>> covariate_columns;
  for (std::size_t c = 0; c < width; ++c) {
    const std::string name = trim(rows.front().fields[c]);
    if (name != "id" && name != "time" && name != "status" && name != "z") covariate_columns.emplace_back(name, c);
  }

  std::vector<SubjectRecord> records;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    SubjectRecord rec;
    rec.id = trim(field(row, index.at("id"), subjects_name, width));
    if (rec.id.empty()) parse_error(subjects_name, row.line, "empty id");
    rec.time = parse_real(subjects_name, row.line, "time", trim(row.fields[index.at("time")]));
    rec.status = parse_binary(subjects_name, row.line, "status", trim(row.fields[index.at("status")]));
    rec.z = parse_real(subjects_name, row.line, "z", trim(row.fields[index.at("z")]));
    for (const auto& [name, c] : covariate_columns) {
      rec.covariates.push_back(parse_real(subjects_name, row.line, name, trim(row.fields[c])));
    }
    by_id.emplace(rec.id, records.size());
    records.push_back(std::move(rec));
  }

  std::vector<std::vector<TreatmentChange>> changes(records.size());
  if (treatment_csv) {
    const auto trows = read_rows(*treatment_csv);
    if (!trows.empty()) {
      const auto tindex = header_index(trows.front(), treatment_name, {"id", "change_time", "value"});
      const std::size_t twidth = trows.front().fields.size();
      for (std::size_t r = 1; r < trows.size(); ++r) {
        const CsvRow& row = trows[r];
        const std::string id = trim(field(row, tindex.at("id"), treatment_name, twidth));
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
          throw Error(ErrorCode::UnknownSubjectInTreatmentFile, std::string(treatment_name) + ":" +
                                                                    std::to_string(row.line) +
                                                                    ": unknown subject id '" + id + "'");
        }
        const double t = parse_real(treatment_name, row.line, "change_time", trim(row.fields[tindex.at("change_time")]));
        const double v = parse_real(treatment_name, row.line, "value", trim(row.fields[tindex.at("value")]));
        // Integral non-binary values pass through so validation can name the subject.
        if (v != std::trunc(v) || std::abs(v) > 1e6) {
          parse_error(treatment_name, row.line, "column 'value' must be 0 or 1");
        }
        changes[it->second].push_back({t, static_cast<int>(v)});
      }
    }
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    SubjectRecord& rec = records[i];
    const int assigned = rec.z == 1.0 ? 1 : 0;
    auto& ch = changes[i];
    if (ch.empty()) {
      rec.path = TreatmentPath::constant(assigned);
      continue;
    }
    if (ch.front().time > 0.0) {
      // Received treatment before the first recorded change is the assigned arm.
      if (ch.front().value == assigned) ch.front().time = 0.0;
      else ch.insert(ch.begin(), {0.0, assigned});
    }
    rec.path = TreatmentPath(std::move(ch));
  }
  return records;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Io, "error reading '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::Io, "error writing '" + path.string() + "'");
}

std::vector<SubjectRecord> parse_dataset(const std::filesystem::path& subjects,
                                         const std::optional<std::filesystem::path>& treatment) {
  const std::string s = read_text_file(subjects);
  if (!treatment) return parse_dataset_text(s, subjects.string());
  const std::string t = read_text_file(*treatment);
  return parse_dataset_text(s, subjects.string(), std::string_view(t), treatment->string());
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_dataset(const std::vector<SubjectRecord>& records, const std::filesystem::path& subjects,
                   const std::filesystem::path& treatment) {
  std::size_t p = 0;
  for (const auto& r : records) p = std::max(p, r.covariates.size());
  std::string s = "id,time,status,z";
  for (std::size_t c = 0; c < p; ++c) s += ",l_" + std::to_string(c + 1);
  s += '\n';
  std::string t = "id,change_time,value\n";
  for (const auto& r : records) {
    if (r.covariates.size() != p) {
      throw Error(ErrorCode::MissingCovariates, "subject '" + r.id + "' has a different number of covariates");
    }
    const std::string id = quote_if_needed(r.id);
    s += id + ',' + format_double(r.time) + ',' + std::to_string(r.status) + ',' + format_double(r.z);
    for (double l : r.covariates) s += ',' + format_double(l);
    s += '\n';
    for (const auto& c : r.path.changes()) {
      t += id + ',' + format_double(c.time) + ',' + std::to_string(c.value) + '\n';
    }
  }
  write_text_file(subjects, s);
  write_text_file(treatment, t);
}

}  // namespace scsmiv
