// Wide CSV format: header id,x1..xp,g,a1..at,y1..yt,s1..st0; missing = empty field.
#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "survsurrogate/core_data.hpp"

namespace survsurrogate {

/// Malformed or unreadable input (as opposed to a data-model violation).
class CsvError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// %.17g; "nan" / "inf" / "-inf" for non-finite values.
std::string format_double(double v);

/// t, t0 and p are taken from the header. Values are checked for syntax only;
/// use validate() for the data model.
LongitudinalDataset read_wide_csv(std::istream& in);
LongitudinalDataset read_wide_csv_file(const std::string& path);

void write_wide_csv(const LongitudinalDataset& data, std::ostream& out);
void write_wide_csv_file(const LongitudinalDataset& data, const std::string& path);

}  // namespace survsurrogate
