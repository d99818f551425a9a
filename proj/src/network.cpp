#include "prgflow/network.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace prgflow {
namespace {

constexpr char kMagic[4] = {'P', 'R', 'G', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("weights file truncated");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string block_line(const BlockWeights<float>& b) {
  std::string s(model_tag(b.model));
  for (const auto& c : b.convs) s += " conv:" + std::to_string(c.in_channels()) + "x" + std::to_string(c.out_channels());
  s += " dense:" + std::to_string(b.dense.weight.cols()) + "x" + std::to_string(b.dense.weight.rows());
  return s;
}

std::string header_text(const ModelWeights<float>& w) {
  std::ostringstream os;
  os << "format=prgflow-weights\n"
     << "cascade=" << w.cascade.to_string() << "\n"
     << "input_channels=" << w.input_channels << "\n"
     << "input_size=" << w.input_size << "\n"
     << "widths=" << join(w.widths) << "\n"
     << "seed=" << w.seed << "\n";
  for (std::size_t i = 0; i < w.blocks.size(); ++i) os << "block" << i << "=" << block_line(w.blocks[i]) << "\n";
  return os.str();
}

std::vector<int> parse_ints(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw DataError("weights header: bad integer list for '" + key + "'");
    }
  }
  return out;
}

}  // namespace

void save_model(const ModelWeights<float>& w, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write weights file " + path.string());
  const std::string header = header_text(w);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for_each_array(const_cast<ModelWeights<float>&>(w), [&](float* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) put_u32(os, std::bit_cast<std::uint32_t>(p[i]));
  });
  if (!os) throw DataError("failed writing weights file " + path.string());
}

ModelWeights<float> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open weights file " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path.string() + ": not a PRGW weights file");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) throw DataError(path.string() + ": unsupported weights version " + std::to_string(version));
  const std::uint32_t len = get_u32(is);
  std::string header(len, '\0');
  if (!is.read(header.data(), len)) throw DataError(path.string() + ": truncated header");

  std::map<std::string, std::string> kv;
  std::istringstream hs(header);
  for (std::string line; std::getline(hs, line);) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ": malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError(path.string() + ": header missing '" + k + "'");
    return it->second;
  };
  if (need("format") != "prgflow-weights") throw DataError(path.string() + ": unexpected format tag");
  const CascadeConfig cascade = CascadeConfig::parse(need("cascade"));
  int channels = 0, size = 0;
  std::uint64_t seed = 0;
  try {
    channels = std::stoi(need("input_channels"));
    size = std::stoi(need("input_size"));
    seed = std::stoull(need("seed"));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError(path.string() + ": bad numeric header field");
  }
  const std::string& widths_text = need("widths");
  const std::vector<int> widths = widths_text.empty() ? std::vector<int>{} : parse_ints(widths_text, "widths");
  ModelWeights<float> w = zero_model<float>(cascade, channels, size, widths);
  w.seed = seed;
  for (std::size_t i = 0; i < w.blocks.size(); ++i)
    if (need("block" + std::to_string(i)) != block_line(w.blocks[i]))
      throw DataError(path.string() + ": block " + std::to_string(i) + " shape does not match header");

  for_each_array(w, [&](float* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = std::bit_cast<float>(get_u32(is));
  });
  if (is.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes after parameters");
  return w;
}

}  // namespace prgflow
