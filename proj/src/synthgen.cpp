#include "dgan/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dgan {

void SynthProcess::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("synth: grid must be at least 1x1");
  if (period < 2) throw std::invalid_argument("synth: period must be >= 2");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth: noise_sigma must be >= 0");
  if (!std::isfinite(amplitude)) throw std::invalid_argument("synth: amplitude must be finite");
  for (const auto& b : bumps)
    if (!(b.width > 0.0)) throw std::invalid_argument("synth: bump widths must be > 0");
}

namespace {

double phase(const SynthProcess& proc, std::int64_t t) {
  const std::int64_t p = proc.period;
  const std::int64_t r = ((t % p) + p) % p;
  return 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(p);
}

// Shortest distance on a ring of the given length.
double ring_distance(double a, double b, double length) {
  double d = std::fmod(a - b, length);
  if (d < 0) d += length;
  return std::min(d, length - d);
}

GridMatrix<double> bump_field(const SynthProcess& proc, double shift_r, double shift_c) {
  GridMatrix<double> f = GridMatrix<double>::Zero(proc.rows, proc.cols);
  const auto R = static_cast<double>(proc.rows), C = static_cast<double>(proc.cols);
  for (const auto& b : proc.bumps) {
    const double cr = b.row + shift_r, cc = b.col + shift_c;
    const double denom = 2.0 * b.width * b.width;
    for (Index r = 0; r < proc.rows; ++r)
      for (Index c = 0; c < proc.cols; ++c) {
        const double dr = ring_distance(static_cast<double>(r), cr, R);
        const double dc = ring_distance(static_cast<double>(c), cc, C);
        f(r, c) += std::exp(-(dr * dr + dc * dc) / denom);
      }
  }
  return f;
}

}  // namespace

GridMatrix<double> oracle_rate(const SynthProcess& proc, std::int64_t t) {
  if (t < 0) throw std::invalid_argument("oracle_rate: t must be >= 0");
  const double cycle = proc.amplitude * (1.0 + std::sin(phase(proc, t))) / 2.0;
  const auto tt = static_cast<double>(t);
  return cycle * bump_field(proc, proc.drift_row * tt, proc.drift_col * tt);
}

ExternalFactorFrame synth_factor_frame(const SynthProcess& proc, std::int64_t t) {
  ExternalFactorFrame f;
  f.poi = bump_field(proc, 0.0, 0.0);
  const double mx = f.poi.maxCoeff();
  if (mx > 0) f.poi /= mx;
  const double ph = phase(proc, t);
  f.weather = Eigen::Vector2d(std::sin(ph), std::cos(ph));
  f.is_weekend = static_cast<double>((t / proc.period) % 2);
  return f;
}

SynthData generate(const SynthProcess& proc, Index num_slots) {
  proc.validate();
  if (num_slots < 1) throw std::invalid_argument("synth: num_slots must be >= 1");
  SynthData out{STSequence(proc.rows, proc.cols, 0), {}};
  out.factors.reserve(static_cast<std::size_t>(num_slots));
  for (Index t = 0; t < num_slots; ++t) {
    GridMatrix<double> m = oracle_rate(proc, t);
    if (proc.noise_sigma > 0.0) {
      std::seed_seq seq{static_cast<std::uint32_t>(proc.seed), static_cast<std::uint32_t>(proc.seed >> 32),
                        static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(static_cast<std::uint64_t>(t) >> 32)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> noise(0.0, proc.noise_sigma);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] += noise(rng);
    }
    m = m.cwiseMax(0.0);
    out.sequence.push_back(std::move(m));
    out.factors.push_back(synth_factor_frame(proc, t));
  }
  return out;
}

}  // namespace dgan
