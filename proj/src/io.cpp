#include "gate/io.hpp"

#include <fstream>
#include <sstream>

#include "gate/error.hpp"

namespace gate {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  if (in.bad()) throw ConfigError("error while reading " + path.string());
  return out.str();
}

void write_file(const std::filesystem::path& path,
                const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec)
      throw ConfigError("cannot create directory " +
                        path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw ConfigError("error while writing " + path.string());
}

}  // namespace gate
