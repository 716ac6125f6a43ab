#include "vmb/checkpoint.hpp"

#include <bit>
#include <fstream>

namespace vmb {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are not supported");

void Checkpoint::add(const std::string& name, std::vector<std::size_t> shape,
                     std::vector<double> data) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  if (n != data.size()) fail(Errc::bad_argument, "checkpoint: shape does not match data size");
  arrays.push_back(NamedArray{name, std::move(shape), std::move(data)});
}

const NamedArray& Checkpoint::get(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  fail(Errc::io_failure, "checkpoint: missing array " + name);
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json header;
  header["format"] = "vmb-ckpt-1";
  header["meta"] = meta;
  auto& arr = header["arrays"] = nlohmann::json::array();
  for (const auto& a : arrays) arr.push_back({{"name", a.name}, {"shape", a.shape}});
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "checkpoint: cannot open " + path + " for writing");
  out << header.dump() << "\n";
  for (const auto& a : arrays)
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  if (!out) fail(Errc::io_failure, "checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(Errc::io_failure, "checkpoint: missing header in " + path);
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "vmb-ckpt-1")
    fail(Errc::io_failure, "checkpoint: bad header in " + path);
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& a : header["arrays"]) {
    NamedArray na;
    na.name = a.at("name").get<std::string>();
    na.shape = a.at("shape").get<std::vector<std::size_t>>();
    std::size_t n = 1;
    for (auto s : na.shape) n *= s;
    na.data.resize(n);
    in.read(reinterpret_cast<char*>(na.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) fail(Errc::io_failure, "checkpoint: truncated array " + na.name + " in " + path);
    ck.arrays.push_back(std::move(na));
  }
  return ck;
}

void save_operator_cache(const std::string& path, const std::string& key, const Eigen::VectorXd& nu,
                         const Eigen::MatrixXd& k_sum, const Eigen::MatrixXd& k_diff) {
  Checkpoint ck;
  ck.meta["key"] = key;
  ck.meta["key_hash"] = fnv1a(key);
  const std::size_t n = static_cast<std::size_t>(nu.size());
  ck.add("nu", {n}, std::vector<double>(nu.data(), nu.data() + n));
  auto pack = [n](const Eigen::MatrixXd& m) {
    std::vector<double> out(n * n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) out[r * n + c] = m(r, c);
    return out;
  };
  ck.add("k_sum", {n, n}, pack(k_sum));
  ck.add("k_diff", {n, n}, pack(k_diff));
  ck.save(path);
}

bool load_operator_cache(const std::string& path, const std::string& key, Eigen::VectorXd& nu,
                         Eigen::MatrixXd& k_sum, Eigen::MatrixXd& k_diff) {
  Checkpoint ck;
  try {
    ck = Checkpoint::load(path);
  } catch (const Error&) {
    return false;
  }
  if (ck.meta.value("key", "") != key) return false;
  if (ck.meta.value("key_hash", 0ull) != fnv1a(key)) return false;
  const auto& nua = ck.get("nu");
  const std::size_t n = nua.shape.at(0);
  nu = Eigen::Map<const Eigen::VectorXd>(nua.data.data(), n);
  auto unpack = [n](const NamedArray& a, Eigen::MatrixXd& m) {
    m.resize(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) m(r, c) = a.data[r * n + c];
  };
  unpack(ck.get("k_sum"), k_sum);
  unpack(ck.get("k_diff"), k_diff);
  return true;
}

}  // namespace vmb
