#ifndef MSCP_IO_HPP
#define MSCP_IO_HPP

#include <filesystem>
#include <string>

#include "mscp/synth.hpp"

namespace mscp {

/// Writes `contents` to `path` through a temporary sibling and a rename, so
/// readers never observe a partial file. Throws IOError naming the path.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

/// Header `x1,...,xK,label`; features with 17 significant digits.
std::string dataset_to_csv(const Dataset& ds);

/// Parses the dataset CSV. Throws ParseError with a 1-based line number.
Dataset dataset_from_csv(const std::string& text);

Dataset read_dataset(const std::filesystem::path& path);

/// printf-style "%.<digits>g".
std::string format_g(double value, int digits);

}  // namespace mscp

#endif  // MSCP_IO_HPP
