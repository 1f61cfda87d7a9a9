#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace gpdi::csv {

/// Splits one line on commas. Fields may be wrapped in double quotes; a
/// doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_line(std::string_view line);

std::string_view trim(std::string_view s) noexcept;

/// Line-oriented reader that strips CR and skips blank lines, tracking the
/// 1-based physical line number of the last returned row.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields);
  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::string buf_;
  std::size_t line_ = 0;
};

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

}  // namespace gpdi::csv
