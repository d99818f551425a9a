#include "prgflow/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "prgflow/bench.hpp"
#include "prgflow/errors.hpp"

namespace prgflow {
namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      {"run.seed", "0"},
      {"data.corpus", "procedural:2000"},
      {"data.channels", "1"},
      {"data.gamma", "gamma1"},
      {"cascade.blocks", "T*2,S*2"},
      {"loss.objective", "supervised"},
      {"loss.photometric", "l1(raw)"},
      {"loss.lambda1", "1.0"},
      {"loss.lambda2", "1.0"},
      {"loss.lambda3", "0.1"},
      {"train.epochs", "20"},
      {"train.batch", "32"},
      {"train.lr", "1e-3"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.patience", "5"},
      {"train.val_fraction", "0.1"},
      {"train.val_pairs", "256"},
      {"train.input_channels", "2"},
      {"train.widths", "small"},
      {"train.mode", "scratch"},
      {"train.teacher", ""},
      {"train.student_blocks", ""},
      {"bench.n", "500"},
      {"bench.estimators", "identity,lk,fft"},
      {"bench.ranges", "gamma1;gamma2"},
      {"bench.timing", "false"},
      {"sim.shape", "circle"},
      {"sim.size", "1.5"},
      {"sim.duration", "60"},
      {"sim.period", "0"},
      {"sim.mean_speed", "0.5"},
      {"sim.max_speed", "1.5"},
      {"sim.altitude", "3"},
      {"sim.altitude_amplitude", "0.3"},
      {"sim.yaw", "0"},
      {"sim.noise", "default"},
      {"sim.altimeter_sigma", "0.02"},
      {"sim.m_per_px", "0.002"},
      {"sim.frames", "true"},
      {"sim.frame_stride", "1"},
      {"fuse.stride", "4"},
      {"fuse.patch", "128"},
      {"fuse.beta", "0.1"},
      {"fuse.estimator", "lk"},
      {"fuse.cascade", "PS*1"},
  };
  return d;
}

const std::set<std::string>& path_keys() {
  static const std::set<std::string> k = {"data.corpus", "train.teacher", "fuse.estimator", "bench.estimators"};
  return k;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string resolve(const std::string& key, const std::string& value, const std::filesystem::path& base) {
  if (base.empty() || value.empty() || !path_keys().count(key)) return value;
  std::string prefix, rest = value;
  if (key == "data.corpus" && value.rfind("procedural:", 0) == 0) return value;
  if (key == "bench.estimators") {
    std::string out;
    for (const std::string& item : split_estimator_list(value))
      out += (out.empty() ? "" : ",") + resolve("fuse.estimator", item, base);
    return out;
  }
  if (key == "fuse.estimator") {
    if (value.rfind("cnn:", 0) != 0) return value;
    prefix = "cnn:";
    rest = value.substr(4);
  }
  std::filesystem::path p(rest);
  if (p.is_relative()) p = base / p;
  return prefix + p.lexically_normal().string();
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig c;
  c.merge_file(path);
  return c;
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string(), std::filesystem::absolute(path).parent_path());
}

void RunConfig::merge_text(const std::string& text, const std::string& origin, const std::filesystem::path& base_dir) {
  std::istringstream in(text);
  std::string line, section = "run";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw DataError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw DataError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(where + ": expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    if (!known(key)) throw DataError(where + ": unknown key '" + key + "'");
    values_[key] = resolve(key, trim(line.substr(eq + 1)), base_dir);
  }
}

void RunConfig::set_assignment(const std::string& assignment, const std::filesystem::path& base_dir) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw DataError("--set expects section.key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), base_dir);
}

void RunConfig::set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir) {
  const std::string k = key.find('.') == std::string::npos ? "run." + key : key;
  if (!known(k)) throw DataError("unknown config key '" + k + "'");
  values_[k] = resolve(k, value, base_dir);
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw DataError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw DataError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw DataError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw DataError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw DataError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

void RunConfig::write(std::ostream& os) const {
  std::string section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << key.substr(dot + 1) << " = " << value << '\n';
  }
}

std::string RunConfig::to_string() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

}  // namespace prgflow
