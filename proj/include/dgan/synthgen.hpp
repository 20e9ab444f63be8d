// Synthetic spatio-temporal demand with a known noise-free rate.
#pragma once

#include "dgan/stmap.hpp"

#include <cstdint>
#include <vector>

namespace dgan {

struct Bump {
  double row = 0.0;
  double col = 0.0;
  double width = 1.0;
  bool operator==(const Bump&) const = default;
};

/// rate(t) = amplitude * (1 + sin(2 pi t / period)) / 2 * sum of Gaussian
/// bumps whose centers move by drift * t, wrapping at the grid edges.
struct SynthProcess {
  Index rows = 9;
  Index cols = 9;
  double amplitude = 1.0;
  Index period = 24;
  std::vector<Bump> bumps{{4.0, 4.0, 2.0}};
  double drift_row = 0.0;  // cells per slot
  double drift_col = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthProcess&) const = default;
};

struct SynthData {
  STSequence sequence;
  FactorSeries factors;
};

/// Maps 0..num_slots-1. Each slot draws its noise from its own stream
/// derived from (seed, slot), so generation is reproducible slot by slot.
/// Factors: PoI = bump field at t = 0 scaled to max 1; weather = (sin, cos)
/// of the daily phase; weekend flag = parity of the day index.
SynthData generate(const SynthProcess& proc, Index num_slots);

/// Noise-free rate at slot t.
GridMatrix<double> oracle_rate(const SynthProcess& proc, std::int64_t t);

ExternalFactorFrame synth_factor_frame(const SynthProcess& proc, std::int64_t t);

}  // namespace dgan
