#include "mfvpinn/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mfvpinn {

namespace {
constexpr char kMagic[8] = {'M', 'F', 'V', 'P', 'N', 'N', '0', '1'};
}

void save_checkpoint(const std::string& path, const NetworkParams& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, sizeof(kMagic));
  const std::uint32_t ndims = static_cast<std::uint32_t>(params.layer_dims.size());
  f.write(reinterpret_cast<const char*>(&ndims), sizeof(ndims));
  for (int d : params.layer_dims) {
    const std::int32_t v = d;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  f.write(reinterpret_cast<const char*>(&params.seed), sizeof(params.seed));
  const std::uint64_t count = params.theta.size();
  f.write(reinterpret_cast<const char*>(&count), sizeof(count));
  f.write(reinterpret_cast<const char*>(params.theta.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad header in " + path);
  std::uint32_t ndims = 0;
  f.read(reinterpret_cast<char*>(&ndims), sizeof(ndims));
  NetworkParams params;
  params.layer_dims.resize(ndims);
  for (std::uint32_t i = 0; i < ndims; ++i) {
    std::int32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    params.layer_dims[i] = v;
  }
  f.read(reinterpret_cast<char*>(&params.seed), sizeof(params.seed));
  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != params.param_count())
    throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
  params.theta.resize(count);
  f.read(reinterpret_cast<char*>(params.theta.data()),
         static_cast<std::streamsize>(count * sizeof(double)));
  if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return params;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace mfvpinn
