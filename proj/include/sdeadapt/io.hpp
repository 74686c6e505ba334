#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sdeadapt {

/// Shortest decimal that round-trips to the same double; '.' separator
/// regardless of locale. Non-finite values print as nan, inf, -inf.
std::string format_double(double value);

/// Minimal CSV emitter: comma separated, LF line endings, header first.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void header(const std::vector<std::string>& columns);
  CsvWriter& field(double value);
  CsvWriter& field(std::int64_t value);
  CsvWriter& field(int value) { return field(static_cast<std::int64_t>(value)); }
  CsvWriter& field(std::size_t value) { return field(static_cast<std::int64_t>(value)); }
  CsvWriter& field(bool value) { return field(static_cast<std::int64_t>(value ? 1 : 0)); }
  CsvWriter& field(std::string_view text);
  CsvWriter& field(const char* text) { return field(std::string_view(text)); }
  void end_row();

 private:
  void separator();
  std::ostream& out_;
  bool row_started_ = false;
};

/// Reads a flat key=value file. Blank lines and lines starting with '#' or
/// ';' are skipped; whitespace around keys and values is trimmed.
std::map<std::string, std::string> read_key_value_file(const std::string& path);

/// Short git revision baked in at configure time.
std::string_view code_revision();

}  // namespace sdeadapt
