#include "prgflow/cascade.hpp"

#include <charconv>

#include "prgflow/errors.hpp"

namespace prgflow {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

CascadeConfig CascadeConfig::parse(std::string_view text) {
  CascadeConfig cfg;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    std::string_view item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (item.empty()) throw DataError("cascade: empty block in '" + std::string(text) + "'");
    int repeat = 1;
    std::size_t mark = item.find_first_of("*x");
    std::size_t mark_len = 1;
    if (const std::size_t times = item.find("\xC3\x97"); times != std::string_view::npos) {
      mark = times;
      mark_len = 2;
    }
    if (mark != std::string_view::npos) {
      const std::string_view count = trim(item.substr(mark + mark_len));
      const auto [p, ec] = std::from_chars(count.data(), count.data() + count.size(), repeat);
      if (ec != std::errc() || p != count.data() + count.size() || repeat < 1)
        throw DataError("cascade: bad repeat count in '" + std::string(item) + "'");
      item = trim(item.substr(0, mark));
    }
    const WarpModel m = parse_model_tag(item);
    for (int i = 0; i < repeat; ++i) cfg.blocks.push_back(m);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  cfg.validate();
  return cfg;
}

std::string CascadeConfig::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < blocks.size();) {
    std::size_t j = i;
    while (j < blocks.size() && blocks[j] == blocks[i]) ++j;
    if (!out.empty()) out += ',';
    out += model_tag(blocks[i]);
    out += '*' + std::to_string(j - i);
    i = j;
  }
  return out;
}

void CascadeConfig::validate() const {
  if (blocks.empty()) throw DataError("cascade: at least one block required");
}

}  // namespace prgflow
