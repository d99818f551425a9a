#pragma once

// Flat key=value run configuration with [section] headers and '#' comments.
// Keys are addressed as "section.key"; keys before the first header live in
// the "run" section. Every accepted key has a default, so the resolved config
// written beside outputs always lists the complete set.

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace prgflow {

class RunConfig {
 public:
  RunConfig();

  // Throws DataError naming the file and line on malformed input or unknown keys.
  static RunConfig load(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, const std::string& origin, const std::filesystem::path& base_dir);

  // "section.key=value"; path values resolve against base_dir.
  void set_assignment(const std::string& assignment, const std::filesystem::path& base_dir = {});
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {});

  bool known(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated

  void write(std::ostream& os) const;
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace prgflow
