#include "rddclust/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rddclust/error.hpp"

namespace rddclust {

std::string fmt_double(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& field, const std::string& column,
                    std::size_t row) {
  double value = 0.0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    fail(ErrorCode::io, "non-numeric " + column + " at row " +
                            std::to_string(row) + " (got '" + field + "')");
  return value;
}

long parse_int(const std::string& field, const std::string& column,
               std::size_t row) {
  long value = 0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    fail(ErrorCode::io, "non-integer " + column + " at row " +
                            std::to_string(row) + " (got '" + field + "')");
  return value;
}

}  // namespace

void write_cohort_csv(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open " + path + " for writing");
  out << "id,x,t,y";
  for (const auto& name : cohort.schema.cont_names) out << ',' << name;
  for (const auto& name : cohort.schema.cat_names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    out << cohort.id[i] << ',' << fmt_double(cohort.x[i]) << ','
        << int(cohort.t[i]) << ',' << fmt_double(cohort.y[i]);
    for (const auto& col : cohort.cont) out << ',' << fmt_double(col[i]);
    for (const auto& col : cohort.cat) out << ',' << col[i];
    out << '\n';
  }
  if (!out) fail(ErrorCode::io, "failed while writing " + path);
}

Cohort load_cohort_csv(const std::string& path, double x0,
                       const std::vector<std::string>& cat_names) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::io, path + " is empty");
  const auto header = split_csv_line(line);

  auto col_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      fail(ErrorCode::io, path + " is missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = col_of("id"), c_x = col_of("x"), c_t = col_of("t"),
                    c_y = col_of("y");

  Cohort cohort;
  cohort.x0 = x0;
  std::vector<std::size_t> cont_cols, cat_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == c_id || c == c_x || c == c_t || c == c_y) continue;
    const bool is_cat = std::find(cat_names.begin(), cat_names.end(),
                                  header[c]) != cat_names.end();
    if (is_cat) {
      cat_cols.push_back(c);
      cohort.schema.cat_names.push_back(header[c]);
    } else {
      cont_cols.push_back(c);
      cohort.schema.cont_names.push_back(header[c]);
    }
  }
  cohort.cont.resize(cont_cols.size());
  cohort.cat.resize(cat_cols.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorCode::io, "row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) +
                              " fields, expected " +
                              std::to_string(header.size()));
    cohort.id.push_back(fields[c_id]);
    cohort.x.push_back(parse_double(fields[c_x], "x", row));
    const long t = parse_int(fields[c_t], "t", row);
    if (t != 0 && t != 1)
      fail(ErrorCode::io, "t must be 0/1 at row " + std::to_string(row));
    cohort.t.push_back(static_cast<std::uint8_t>(t));
    cohort.y.push_back(parse_double(fields[c_y], "y", row));
    for (std::size_t j = 0; j < cont_cols.size(); ++j)
      cohort.cont[j].push_back(
          parse_double(fields[cont_cols[j]], cohort.schema.cont_names[j], row));
    for (std::size_t j = 0; j < cat_cols.size(); ++j) {
      const long code =
          parse_int(fields[cat_cols[j]], cohort.schema.cat_names[j], row);
      if (code < 1)
        fail(ErrorCode::io, "categorical level must be >= 1 at row " +
                                std::to_string(row));
      cohort.cat[j].push_back(static_cast<std::int32_t>(code));
    }
  }

  for (std::size_t j = 0; j < cohort.cat.size(); ++j) {
    std::int32_t max_level = 2;
    for (auto v : cohort.cat[j]) max_level = std::max(max_level, v);
    cohort.schema.cat_levels.push_back(max_level);
  }
  validate_cohort(cohort);
  return cohort;
}

}  // namespace rddclust
