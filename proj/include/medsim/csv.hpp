#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

#include "medsim/errors.hpp"

namespace medsim {

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("failed to format a double");
  return std::string(buf, ptr);
}

/// Minimal CSV writer: comma separation, newline rows, numbers formatted for
/// exact round-trips. Strings are written verbatim (callers pass plain names).
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
    path_ = path.string();
  }

  /// Appends one field to the current row.
  template <typename T>
  void field(const T& value) {
    if (!first_) out_ << ',';
    first_ = false;
    if constexpr (std::is_floating_point_v<T>) {
      out_ << format_double(value);
    } else if constexpr (std::is_integral_v<T>) {
      out_ << value;
    } else {
      out_ << value;  // string-like
    }
  }

  void end_row() {
    out_ << '\n';
    first_ = true;
    if (!out_) throw Error("write failed on " + path_);
  }

  template <typename... Ts>
  void row(const Ts&... fields) {
    (field(fields), ...);
    end_row();
  }

 private:
  std::ofstream out_;
  std::string path_;
  bool first_ = true;
};

}  // namespace medsim
