#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "cauvis/cap/cross_attention.hpp"

// Plot-ready dump of attention spectra:
//   layer,step,index,sigma,cumulative_energy_ratio
namespace cauvis::cap {

struct SpectrumRow {
  std::size_t layer = 0;
  std::size_t step = 0;
  std::size_t index = 0;
  double sigma = 0.0;
  double cumulative_energy_ratio = 0.0;
};

inline std::vector<SpectrumRow> spectrum_rows(std::size_t layer, std::size_t step,
                                              const std::vector<double>& sigma) {
  const auto cum = cumulative_energy(sigma);
  std::vector<SpectrumRow> rows;
  for (std::size_t i = 0; i < sigma.size(); ++i) rows.push_back({layer, step, i, sigma[i], cum[i]});
  return rows;
}

inline void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumRow>& rows) {
  os << "layer,step,index,sigma,cumulative_energy_ratio\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.layer << ',' << r.step << ',' << r.index << ',' << r.sigma << ','
       << r.cumulative_energy_ratio << '\n';
}

}  // namespace cauvis::cap
