#include "safepaint/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace safepaint::archive {

static_assert(std::endian::native == std::endian::little, "archive format assumes a little-endian host");

const nn::Tensor& Archive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("archive has no tensor '" + name + "'");
}

bool Archive::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void write(const std::string& path, const Archive& a) {
  nlohmann::json meta = a.meta;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, t] : a.tensors)
    index.push_back({{"name", name}, {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}}});
  meta["tensors"] = std::move(index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << a.header << '\n' << meta.dump() << '\n';
  for (const auto& [name, t] : a.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Archive read(const std::string& path, const std::string& expected_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  Archive a;
  std::getline(in, a.header);
  if (a.header != expected_header)
    throw std::runtime_error("'" + path + "' has header '" + a.header + "', expected '" + expected_header + "'");
  std::string line;
  std::getline(in, line);
  a.meta = nlohmann::json::parse(line);
  for (const auto& entry : a.meta.at("tensors")) {
    const auto& s = entry.at("shape");
    nn::Tensor t({s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>(), s.at(3).get<int>()});
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("'" + path + "' is truncated");
    a.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  a.meta.erase("tensors");
  return a;
}

}  // namespace safepaint::archive
