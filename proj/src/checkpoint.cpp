#include "mapdistill/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mapdistill {

namespace {
constexpr char kMagic[8] = {'M', 'D', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put_u64(os, params.items.size());
  // Manifest: name -> shape for every section, in order.
  for (const auto& [name, m] : params.items) {
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, 2);
    put_u64(os, static_cast<std::uint64_t>(m.rows()));
    put_u64(os, static_cast<std::uint64_t>(m.cols()));
  }
  for (const auto& [name, m] : params.items) {
    VecXd flat(m.size());
    Eigen::Map<MatXd>(flat.data(), m.rows(), m.cols()) = m;
    write_tensor_blob(os, {m.rows(), m.cols()}, flat);
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint for reading: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw ParseError("checkpoint: bad magic in " + path);

  const std::uint64_t count = get_u64(is);
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = get_u64(is);
    std::string name(len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(len));
    if (!is) throw ParseError("checkpoint: truncated manifest in " + path);
    const std::uint64_t rank = get_u64(is);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(static_cast<Index>(get_u64(is)));
    manifest.emplace_back(std::move(name), std::move(shape));
  }

  ModelParams params;
  for (const auto& [name, declared] : manifest) {
    Shape shape;
    VecXd data;
    read_tensor_blob(is, shape, data);
    if (shape != declared) throw ParseError("checkpoint: section shape disagrees with manifest for " + name);
    if (shape.size() != 2) throw ParseError("checkpoint: non-matrix section " + name);
    MatXd m = Eigen::Map<MatXd>(data.data(), shape[0], shape[1]);
    params.items.emplace_back(name, std::move(m));
  }
  return params;
}

}  // namespace mapdistill
