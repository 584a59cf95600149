// Decay of a single sine mode under the linearized flow, printed next to the
// closed-form discrete and continuous amplitudes.

#include <cstdio>

#include <viscoflow/viscoflow.hpp>

using namespace viscoflow;

int main(int argc, char** argv) {
  const int k = argc > 1 ? std::atoi(argv[1]) : 1;
  const double tau = argc > 2 ? std::atof(argv[2]) : 0.05;
  const Grid grid(1, 128);
  const auto cfg = LinearConfig::from_bundle(reference_bundle(1, 2.0), grid, tau, 1.0);
  InitialData init;
  init.family = "mode";
  init.mode = k;
  const auto tr = run_linear_flow(cfg, initial_displacement(grid, init, cfg.clamp));

  const double a0 = modal_amplitude(tr.fields.front(), k);
  std::printf("%6s %10s %14s %14s %14s %12s\n", "n", "t", "amplitude", "discrete", "continuous", "energy");
  for (std::size_t n = 0; n < tr.fields.size(); ++n) {
    const double t = tr.ledger[n].t;
    std::printf("%6zu %10.4f %14.8e %14.8e %14.8e %12.6e\n", n, t, modal_amplitude(tr.fields[n], k),
                modal_discrete_1d(a0, tau, static_cast<int>(n)), modal_oracle_1d(k, a0, t), tr.ledger[n].energy);
  }
  return 0;
}
