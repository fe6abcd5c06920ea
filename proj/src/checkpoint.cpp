#include "stylecal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stylecal {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {
constexpr const char* kMagic = "STYLECAL-CKPT v1";
}

std::string Checkpoint::header_value(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return v;
  throw std::out_of_range("checkpoint header has no key " + key);
}

bool Checkpoint::has_store(const std::string& name) const {
  for (const auto& [n, _] : stores)
    if (n == name) return true;
  return false;
}

const ParameterStore& Checkpoint::store(const std::string& name) const {
  for (const auto& [n, s] : stores)
    if (n == name) return s;
  throw std::out_of_range("checkpoint has no store " + name);
}

ParameterStore& Checkpoint::store(const std::string& name) {
  for (auto& [n, s] : stores)
    if (n == name) return s;
  throw std::out_of_range("checkpoint has no store " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << kMagic << "\n";
  for (const auto& [k, v] : ckpt.header) out << k << "=" << v << "\n";
  out << "INDEX\n";
  for (const auto& [sname, store] : ckpt.stores) {
    for (const auto& pname : store.names()) {
      const Param& p = store.at(pname);
      out << sname << "/" << pname;
      for (int d : p.shape) out << " " << d;
      out << "\n";
    }
  }
  out << "DATA\n";
  for (const auto& [sname, store] : ckpt.stores) {
    for (const auto& pname : store.names()) {
      const Param& p = store.at(pname);
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(sizeof(double) * p.value.size()));
    }
  }
  if (!out) throw std::runtime_error("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw std::runtime_error("bad checkpoint magic in " + path);
  Checkpoint ckpt;
  while (std::getline(in, line)) {
    if (line == "INDEX") break;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed checkpoint header line: " + line);
    ckpt.header.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  struct Entry {
    std::string store, name;
    Shape shape;
  };
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    if (line == "DATA") break;
    std::istringstream ls(line);
    std::string qual;
    ls >> qual;
    auto slash = qual.find('/');
    if (slash == std::string::npos)
      throw std::runtime_error("malformed checkpoint index line: " + line);
    Entry e;
    e.store = qual.substr(0, slash);
    e.name = qual.substr(slash + 1);
    int d;
    while (ls >> d) e.shape.push_back(d);
    entries.push_back(std::move(e));
  }
  for (const auto& e : entries) {
    if (!ckpt.has_store(e.store)) ckpt.stores.emplace_back(e.store, ParameterStore{});
    int n = shape_size(e.shape);
    Array data(n);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sizeof(double) * n));
    if (!in) throw std::runtime_error("truncated checkpoint data in " + path);
    ckpt.store(e.store).add(e.name, e.shape, std::move(data));
  }
  return ckpt;
}

}  // namespace stylecal
