#include "dgan/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace dgan {

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error(path.string() + " is truncated");
  return v;
}

void put_doubles(std::ostream& out, const double* p, Index n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * static_cast<Index>(sizeof(double))));
}

void get_doubles(std::istream& in, double* p, Index n, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * static_cast<Index>(sizeof(double))));
  if (!in) throw std::runtime_error(path.string() + " is truncated");
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, const std::array<char, 4>& magic,
                      std::uint32_t version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file not found: " + path.string());
  std::array<char, 4> m{};
  in.read(m.data(), 4);
  if (!in || m != magic) throw std::runtime_error(path.string() + ": bad magic");
  const auto v = get<std::uint32_t>(in, path);
  if (v != version) throw std::runtime_error(path.string() + ": unsupported version " + std::to_string(v));
  return in;
}

constexpr std::array<char, 4> kSeqMagic{'S', 'T', 'S', 'Q'};
constexpr std::array<char, 4> kFacMagic{'S', 'T', 'F', 'X'};

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void write_sequence(const STSequence& seq, const std::filesystem::path& path) {
  auto out = open_out(path, std::ios::binary);
  out.write(kSeqMagic.data(), 4);
  put<std::uint32_t>(out, kSequenceVersion);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(seq.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(seq.cols()));
  put<std::uint64_t>(out, seq.size());
  put<std::int64_t>(out, seq.epoch_slot());
  for (const auto& m : seq.maps()) put_doubles(out, m.values.data(), m.values.size());
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

STSequence read_sequence(const std::filesystem::path& path) {
  auto in = open_in(path, kSeqMagic, kSequenceVersion);
  const auto rows = static_cast<Index>(get<std::uint64_t>(in, path));
  const auto cols = static_cast<Index>(get<std::uint64_t>(in, path));
  const auto n = get<std::uint64_t>(in, path);
  const auto epoch = get<std::int64_t>(in, path);
  STSequence seq(rows, cols, epoch);
  for (std::uint64_t k = 0; k < n; ++k) {
    GridMatrix<double> m(rows, cols);
    get_doubles(in, m.data(), m.size(), path);
    seq.push_back(std::move(m));
  }
  return seq;
}

void write_factors(const FactorSeries& factors, const std::filesystem::path& path) {
  auto out = open_out(path, std::ios::binary);
  out.write(kFacMagic.data(), 4);
  put<std::uint32_t>(out, kFactorsVersion);
  const Index rows = factors.empty() ? 0 : factors.front().poi.rows();
  const Index cols = factors.empty() ? 0 : factors.front().poi.cols();
  const Index arity = factors.empty() ? 0 : factors.front().weather.size();
  put<std::uint64_t>(out, factors.size());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(rows));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(cols));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(arity));
  for (const auto& f : factors) {
    if (f.poi.rows() != rows || f.poi.cols() != cols || f.weather.size() != arity)
      throw std::invalid_argument("factor frames have inconsistent shapes");
    put_doubles(out, f.poi.data(), f.poi.size());
    put_doubles(out, f.weather.data(), f.weather.size());
    put<double>(out, f.is_weekend);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

FactorSeries read_factors(const std::filesystem::path& path) {
  auto in = open_in(path, kFacMagic, kFactorsVersion);
  const auto n = get<std::uint64_t>(in, path);
  const auto rows = static_cast<Index>(get<std::uint64_t>(in, path));
  const auto cols = static_cast<Index>(get<std::uint64_t>(in, path));
  const auto arity = static_cast<Index>(get<std::uint64_t>(in, path));
  FactorSeries out(n);
  for (auto& f : out) {
    f.poi.resize(rows, cols);
    get_doubles(in, f.poi.data(), f.poi.size(), path);
    f.weather.resize(arity);
    get_doubles(in, f.weather.data(), arity, path);
    f.is_weekend = get<double>(in, path);
  }
  return out;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& fingerprint,
                       const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "# fingerprint " << fingerprint << '\n';
  out << "model,horizon,rmse,mae,samples\n";
  for (const auto& r : rows)
    out << r.model << ',' << r.horizon << ',' << format_double(r.rmse) << ',' << format_double(r.mae) << ','
        << r.samples << '\n';
}

nlohmann::json metrics_json(const std::vector<MetricRow>& rows, const std::string& fingerprint) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"model", r.model}, {"horizon", r.horizon}, {"rmse", r.rmse}, {"mae", r.mae}, {"samples", r.samples}});
  return {{"fingerprint", fingerprint}, {"rows", arr}};
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_maps_csv(const std::vector<GridMatrix<double>>& maps, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "step,row,col,value\n";
  for (std::size_t s = 0; s < maps.size(); ++s)
    for (Index r = 0; r < maps[s].rows(); ++r)
      for (Index c = 0; c < maps[s].cols(); ++c)
        out << s + 1 << ',' << r << ',' << c << ',' << format_double(maps[s](r, c)) << '\n';
}

}  // namespace dgan
