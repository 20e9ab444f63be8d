#include "dgan/checkpoint.hpp"

#include "dgan/config.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dgan {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'D', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint " + path.string() + " is truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = get<std::uint64_t>(in, path);
  if (n > (1u << 30)) throw std::runtime_error("checkpoint " + path.string() + " is corrupt");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint " + path.string() + " is truncated");
  return s;
}

template <typename Model, typename F>
void for_each_group(Model& m, F&& f) {
  f("encoder", m.encoder());
  f("factor_encoder", m.factor_encoder());
  f("decoder", m.decoder());
  f("discriminator", m.discriminator());
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointVersion);
    Json header{{"arch", to_json(ckpt.model.arch())},
                {"scaler", to_json(ckpt.scaler)},
                {"config_hash", ckpt.config_hash},
                {"seed", ckpt.seed},
                {"epoch", ckpt.epoch}};
    put_string(out, header.dump());

    std::uint64_t count = 0;
    for_each_group(ckpt.model, [&](const char*, const ParamSet& ps) { count += ps.size(); });
    put<std::uint64_t>(out, count);
    for_each_group(ckpt.model, [&](const char* group, const ParamSet& ps) {
      for (const auto& [name, p] : ps) {
        put_string(out, std::string(group) + "/" + name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape.size()));
        for (Index d : p.value.shape) put<std::int64_t>(out, d);
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
      }
    });
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error(path.string() + " is not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  Json header;
  try {
    header = Json::parse(get_string(in, path));
  } catch (const Json::exception& e) {
    throw std::runtime_error("checkpoint header is corrupt: " + std::string(e.what()));
  }
  const ArchSpec arch = arch_from_json(header.at("arch"));
  if (expect.rows && *expect.rows != arch.rows)
    throw std::runtime_error("checkpoint grid rows " + std::to_string(arch.rows) + " do not match expected " +
                             std::to_string(*expect.rows));
  if (expect.cols && *expect.cols != arch.cols)
    throw std::runtime_error("checkpoint grid cols " + std::to_string(arch.cols) + " do not match expected " +
                             std::to_string(*expect.cols));
  Checkpoint ck;
  ck.config_hash = header.at("config_hash").get<std::string>();
  if (expect.config_hash && *expect.config_hash != ck.config_hash)
    throw std::runtime_error("checkpoint config hash " + ck.config_hash + " does not match " + *expect.config_hash);
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.epoch = header.at("epoch").get<std::int64_t>();
  ck.scaler = scaler_from_json(header.at("scaler"));
  ck.model = DGanModel(arch, ck.seed);

  std::map<std::string, Parameter*> slots;
  for_each_group(ck.model, [&](const char* group, ParamSet& ps) {
    for (auto& [name, p] : ps) slots[std::string(group) + "/" + name] = &p;
  });
  const auto count = get<std::uint64_t>(in, path);
  if (count != slots.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, architecture expects " +
                             std::to_string(slots.size()));
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = get_string(in, path);
    auto it = slots.find(name);
    if (it == slots.end()) throw std::runtime_error("checkpoint has unexpected tensor '" + name + "'");
    const auto ndim = get<std::uint32_t>(in, path);
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(get<std::int64_t>(in, path));
    Parameter& p = *it->second;
    if (shape != p.value.shape)
      throw std::runtime_error("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                               shape_string(p.value.shape));
    in.read(reinterpret_cast<char*>(p.value.data.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    slots.erase(it);
  }
  return ck;
}

}  // namespace dgan
